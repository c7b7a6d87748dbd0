//! Analytic power and latency models for the photonic core.

use serde::{Deserialize, Serialize};

use crate::photonic::{HardwareConfig, BRANCHES};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// Laser power per wavelength, mW.
pub const LASER_MW: f64 = 100.0;
/// Two MRRs and their DACs per D·R slot, mW: 2 · (19.5 + 26).
pub const MRR_DAC_PAIR_MW: f64 = 91.0;
/// TIA plus ADC at each waveguide output, mW (17 + 76).
pub const TIA_ADC_MW: f64 = 93.0;

/// Published power draw, in W, of the GPUs the photonic system is compared to.
pub const GPU_POWER_W: [(&str, f64); 4] = [
    ("AMD Vega FE", 375.0),
    ("AMD M125", 300.0),
    ("NVIDIA Tesla V100", 250.0),
    ("NVIDIA GTX 1080 Ti", 250.0),
];

/// Propagation delay figure quoted alongside the formula for `R = 100`; the
/// formula itself gives about 90.9 ps with the same parameters.
pub const QUOTED_PROPAGATION_PS: f64 = 110.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    Mrr,
    Adc,
    Dac,
    BalancedPd,
    Tia,
    Sdram,
}

impl Component {
    pub fn name(self) -> &'static str {
        match self {
            Component::Mrr => "MRR",
            Component::Adc => "ADC",
            Component::Dac => "DAC",
            Component::BalancedPd => "BalancedPD",
            Component::Tia => "TIA",
            Component::Sdram => "SDRAM",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpeed {
    pub component: Component,
    /// GS/s
    pub throughput: f64,
    /// ps
    pub processing_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentThroughputTable {
    pub entries: Vec<ComponentSpeed>,
}

impl Default for ComponentThroughputTable {
    fn default() -> Self {
        let row = |component, throughput, processing_time| ComponentSpeed {
            component,
            throughput,
            processing_time,
        };
        Self {
            entries: vec![
                row(Component::Mrr, 60.0, 17.0),
                row(Component::Adc, 10.0, 100.0),
                row(Component::Dac, 10.0, 100.0),
                row(Component::BalancedPd, 25.0, 40.0),
                row(Component::Tia, 10.0, 100.0),
                row(Component::Sdram, 16.0, 60.0),
            ],
        }
    }
}

impl ComponentThroughputTable {
    /// Slowest component; the first listed wins a tie.
    pub fn bottleneck(&self) -> ComponentSpeed {
        *self
            .entries
            .iter()
            .reduce(|best, e| if e.processing_time > best.processing_time { e } else { best })
            .expect("throughput table is empty")
    }
}

/// `P = 100 R + 91 D R + 93 D` in mW.
pub fn power_total(d: usize, r: usize) -> f64 {
    let (d, r) = (d as f64, r as f64);
    LASER_MW * r + MRR_DAC_PAIR_MW * d * r + TIA_ADC_MW * d
}

/// Power in W rounded to the nearest 5 W for display.
pub fn power_display_watts(power_mw: f64) -> f64 {
    (power_mw / 1000.0 / 5.0).round() * 5.0
}

/// Light transit time through `2R` cascaded rings plus trapping in the two
/// resonant rings, in ps.
pub fn propagation_time(cfg: &HardwareConfig) -> f64 {
    let radius_m = cfg.mrr_radius * 1e-6;
    let bus = 2.0 * radius_m * 2.0 * cfg.rings_r as f64;
    let trapped = 2.0 * 2.0 * std::f64::consts::PI * radius_m * (cfg.finesse / (2.0 * std::f64::consts::PI));
    (bus + trapped) / (SPEED_OF_LIGHT / cfg.n_eff) * 1e12
}

/// Single uses of the core needed for an `m × n` by `n × k` complex product.
pub fn n_use(m: usize, n: usize, k: usize, cfg: &HardwareConfig) -> u64 {
    let d = cfg.channels_d as u64;
    let r = cfg.rings_r as u64;
    BRANCHES as u64 * k as u64 * (m as u64).div_ceil(d) * (n as u64).div_ceil(r)
}

/// Total time in ps.
pub fn total_time(m: usize, n: usize, k: usize, cfg: &HardwareConfig) -> f64 {
    n_use(m, n, k, cfg) as f64 * cfg.t_single_use
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub d: usize,
    pub r: usize,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub power_mw: f64,
    pub use_count: u64,
    pub t_total_ps: f64,
    pub t_propagation_ps: f64,
    pub bottleneck: String,
}

impl CostReport {
    pub const CSV_HEADER: &'static str = "d,r,m,n,k,power_mw,use_count,t_total_ps,t_propagation_ps";

    pub fn new(m: usize, n: usize, k: usize, cfg: &HardwareConfig) -> Self {
        Self::with_table(m, n, k, cfg, &ComponentThroughputTable::default())
    }

    pub fn with_table(m: usize, n: usize, k: usize, cfg: &HardwareConfig, table: &ComponentThroughputTable) -> Self {
        Self {
            d: cfg.channels_d,
            r: cfg.rings_r,
            m,
            n,
            k,
            power_mw: power_total(cfg.channels_d, cfg.rings_r),
            use_count: n_use(m, n, k, cfg),
            t_total_ps: total_time(m, n, k, cfg),
            t_propagation_ps: propagation_time(cfg),
            bottleneck: table.bottleneck().component.name().to_string(),
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.d,
            self.r,
            self.m,
            self.n,
            self.k,
            self.power_mw,
            self.use_count,
            self.t_total_ps,
            self.t_propagation_ps
        )
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("CostReport serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonic::tile_plan;
    use proptest::prelude::*;

    #[test]
    fn power_table_rows() {
        assert_eq!(power_total(32, 32), 99_360.0);
        assert_eq!(power_total(64, 32), 195_520.0);
        assert_eq!(power_total(64, 64), 385_088.0);
        assert_eq!(power_display_watts(99_360.0), 100.0);
        assert_eq!(power_display_watts(195_520.0), 195.0);
        assert_eq!(power_display_watts(385_088.0), 385.0);
    }

    #[test]
    fn propagation_examples() {
        let mut cfg = HardwareConfig::with_dims(8, 100);
        let t = propagation_time(&cfg);
        // (4·10µm·100 + 2·10µm·368)·2.4 / 2.998e8 m/s
        let expected = (4.0e-3 + 7.36e-3) * 2.4 / 2.998e8 * 1e12;
        assert!((t - expected).abs() < 1e-9);
        assert!((t - 90.9).abs() < 0.05, "{t}");

        cfg.finesse = 0.0;
        let transit = propagation_time(&cfg);
        assert!((transit - 4.0e-3 * 2.4 / 2.998e8 * 1e12).abs() < 1e-9);
        cfg.rings_r = 50;
        assert!((propagation_time(&cfg) * 2.0 - transit).abs() < 1e-9);
    }

    #[test]
    fn use_counts_and_times() {
        let cfg = HardwareConfig::with_dims(32, 32);
        assert_eq!(n_use(7680, 1500, 2560, &cfg), 231_014_400);
        assert_eq!(n_use(10752, 1, 3584, &cfg), 9_633_792);
        assert_eq!(n_use(1, 1, 1, &cfg), 8);
        assert!((total_time(7680, 1500, 2560, &cfg) / 1e9 - 23.10).abs() < 0.005);
        assert!((total_time(10752, 1, 3584, &cfg) / 1e9 - 0.963).abs() < 0.0005);

        let doubled = HardwareConfig::with_dims(64, 32);
        assert_eq!(
            total_time(7680, 1500, 2560, &doubled) * 2.0,
            total_time(7680, 1500, 2560, &cfg)
        );
    }

    #[test]
    fn bottleneck_is_electronic_interface() {
        let table = ComponentThroughputTable::default();
        let b = table.bottleneck();
        assert_eq!(b.processing_time, 100.0);
        assert!(matches!(b.component, Component::Adc | Component::Dac | Component::Tia));
        assert_eq!(CostReport::new(8, 8, 8, &HardwareConfig::default()).bottleneck, "ADC");
    }

    #[test]
    fn processing_time_tracks_throughput() {
        // SDRAM is listed at 60 ps for 16 GS/s (62.5 ps), hence the 5% slack.
        for e in ComponentThroughputTable::default().entries {
            let derived = 1000.0 / e.throughput;
            assert!((derived - e.processing_time).abs() / e.processing_time <= 0.05, "{e:?}");
        }
    }

    #[test]
    fn report_invariants_and_formats() {
        let cfg = HardwareConfig::with_dims(32, 32);
        let rep = CostReport::new(7680, 1500, 2560, &cfg);
        assert_eq!(rep.t_total_ps, rep.use_count as f64 * cfg.t_single_use);
        assert_eq!(
            rep.csv_row(),
            format!("32,32,7680,1500,2560,99360,231014400,23101440000,{}", rep.t_propagation_ps)
        );
        assert_eq!(CostReport::CSV_HEADER.split(',').count(), rep.csv_row().split(',').count());
        let json = rep.to_json();
        assert_eq!(json["use_count"], 231_014_400u64);
        assert_eq!(json["bottleneck"], "ADC");
    }

    proptest! {
        #[test]
        fn n_use_matches_tile_plan(m in 1usize..5000, n in 1usize..5000, k in 1usize..500, d in 1usize..64, r in 1usize..=100) {
            let cfg = HardwareConfig::with_dims(d, r);
            prop_assert_eq!(n_use(m, n, k, &cfg), tile_plan(m, n, k, &cfg).use_count as u64);
        }

        #[test]
        fn time_non_increasing_and_power_increasing(m in 1usize..5000, n in 1usize..5000, k in 1usize..100, d in 1usize..64, r in 1usize..50) {
            let base = HardwareConfig::with_dims(d, r);
            let more_d = HardwareConfig::with_dims(d * 2, r);
            let more_r = HardwareConfig::with_dims(d, r * 2);
            prop_assert!(total_time(m, n, k, &more_d) <= total_time(m, n, k, &base));
            prop_assert!(total_time(m, n, k, &more_r) <= total_time(m, n, k, &base));
            prop_assert!(power_total(d + 1, r) > power_total(d, r));
            prop_assert!(power_total(d, r + 1) > power_total(d, r));
        }
    }
}
