//! Run configuration: three flat TOML sections, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twpa_core::mixing::Tier;
use twpa_core::Device;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EJ2 {
    Ghz(f64),
    /// The literal string "calibrate".
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceConfig {
    pub alpha: f64,
    /// E_J2/h in GHz, or "calibrate" to fit E_J2 and C to the targets below.
    pub e_j2_ghz: EJ2,
    /// Shunt capacitance in fF (the starting guess when calibrating).
    pub capacitance_ff: f64,
    pub loading_ratio: f64,
    pub cells_per_supercell: usize,
    pub repetitions: usize,
    pub z_term_ohm: f64,
    pub n_large: u32,
    pub target_impedance_ohm: f64,
    pub target_edge_ghz: f64,
    pub target_flux: f64,
    /// Starting E_J2 for calibration.
    pub seed_e_j2_ghz: f64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            alpha: 0.16,
            e_j2_ghz: EJ2::Keyword("calibrate".into()),
            capacitance_ff: 200.0,
            loading_ratio: 1.5,
            cells_per_supercell: 3,
            repetitions: 147,
            z_term_ohm: 50.0,
            n_large: 3,
            target_impedance_ohm: 50.0,
            target_edge_ghz: 11.5,
            target_flux: 0.38,
            seed_e_j2_ghz: 800.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatingConfig {
    /// Φ_ext/Φ₀.
    pub flux: f64,
    pub fp_ghz: f64,
    pub power_dbm: f64,
    /// Signal grid; an empty range means `signal_points` interior points of (0, f_p).
    pub signal_start_ghz: Option<f64>,
    pub signal_stop_ghz: Option<f64>,
    pub signal_points: usize,
    /// Frequency grid of `dispersion`, `s21-map` and `harmonic-response`.
    pub f_start_ghz: Option<f64>,
    pub f_stop_ghz: Option<f64>,
    pub f_points: Option<usize>,
    /// Flux grid of `snail-sweep` and `s21-map`.
    pub flux_start: Option<f64>,
    pub flux_stop: Option<f64>,
    pub flux_points: Option<usize>,
    /// Tone power of `harmonic-response`.
    pub tone_dbm: f64,
    /// Signal of `oracle`; defaults to 0.3·f_p.
    pub signal_ghz: Option<f64>,
    /// Signal power relative to the pump for `oracle`.
    pub signal_offset_db: f64,
    /// Input noise photons for `noise-fit`.
    pub noise_n_in: f64,
    /// Frequency for photon to kelvin conversion.
    pub noise_f_ghz: f64,
}

impl Default for OperatingConfig {
    fn default() -> Self {
        Self {
            flux: 0.38,
            fp_ghz: 6.2,
            power_dbm: -91.4,
            signal_start_ghz: None,
            signal_stop_ghz: None,
            signal_points: 59,
            f_start_ghz: None,
            f_stop_ghz: None,
            f_points: None,
            flux_start: None,
            flux_stop: None,
            flux_points: None,
            tone_dbm: -111.0,
            signal_ghz: None,
            signal_offset_db: -60.0,
            noise_n_in: 0.5,
            noise_f_ghz: 6.0351,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExecutionConfig {
    /// "minimal", "extended" or "cascade-N".
    pub tier: String,
    /// Also run the time-domain oracle where a subcommand supports it.
    pub oracle: bool,
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub seed: u64,
    pub steps_per_cell: usize,
    /// Chain length of the oracle runs; 0 uses the device length.
    pub oracle_cells: usize,
    /// Write the oracle's load-voltage time series.
    pub dump_time_series: bool,
}

impl Default for ExecutionConfig {
    fn default() -> Self {
        Self {
            tier: "cascade-3".into(),
            oracle: false,
            out: PathBuf::from("out"),
            jobs: 0,
            seed: 0,
            steps_per_cell: 8,
            oracle_cells: 60,
            dump_time_series: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub device: DeviceConfig,
    pub operating: OperatingConfig,
    pub execution: ExecutionConfig,
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub flux: Option<f64>,
    pub fp_ghz: Option<f64>,
    pub power_dbm: Option<f64>,
    pub cells: Option<usize>,
    pub tier: Option<String>,
    pub signal_points: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(v) = &o.out {
            self.execution.out = v.clone();
        }
        if let Some(v) = o.jobs {
            self.execution.jobs = v;
        }
        if let Some(v) = o.seed {
            self.execution.seed = v;
        }
        if let Some(v) = o.flux {
            self.operating.flux = v;
        }
        if let Some(v) = o.fp_ghz {
            self.operating.fp_ghz = v;
        }
        if let Some(v) = o.power_dbm {
            self.operating.power_dbm = v;
        }
        if let Some(cells) = o.cells {
            let per = self.device.cells_per_supercell.max(1);
            if cells < per {
                return Err(CliError::Config(format!(
                    "--cells {cells} is shorter than one supercell of {per} cells"
                )));
            }
            self.device.repetitions = cells / per;
        }
        if let Some(v) = &o.tier {
            self.execution.tier = v.clone();
        }
        if let Some(v) = o.signal_points {
            self.operating.signal_points = v;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if let EJ2::Keyword(k) = &self.device.e_j2_ghz {
            if k != "calibrate" {
                return bad(format!("device.e_j2_ghz must be a number or \"calibrate\", got \"{k}\""));
            }
        }
        let d = &self.device;
        for (name, v) in [
            ("device.alpha", d.alpha),
            ("device.capacitance_ff", d.capacitance_ff),
            ("device.loading_ratio", d.loading_ratio),
            ("device.z_term_ohm", d.z_term_ohm),
            ("device.target_impedance_ohm", d.target_impedance_ohm),
            ("device.target_edge_ghz", d.target_edge_ghz),
            ("device.seed_e_j2_ghz", d.seed_e_j2_ghz),
            ("operating.fp_ghz", self.operating.fp_ghz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if d.cells_per_supercell == 0 || d.repetitions == 0 {
            return bad("device.cells_per_supercell and device.repetitions must be >= 1".into());
        }
        if self.operating.signal_points == 0 {
            return bad("operating.signal_points must be >= 1".into());
        }
        if self.execution.steps_per_cell == 0 {
            return bad("execution.steps_per_cell must be >= 1".into());
        }
        parse_tier(&self.execution.tier)?;
        Ok(())
    }

    pub fn tier(&self) -> Tier {
        parse_tier(&self.execution.tier).expect("validated")
    }

    /// Device with the configured (uncalibrated) constants.
    pub fn device_template(&self) -> Device {
        let d = &self.device;
        Device {
            alpha: d.alpha,
            e_j2_ghz: match d.e_j2_ghz {
                EJ2::Ghz(v) => v,
                EJ2::Keyword(_) => d.seed_e_j2_ghz,
            },
            capacitance: d.capacitance_ff * 1e-15,
            loaded_capacitance: None,
            loading_ratio: d.loading_ratio,
            cells_per_supercell: d.cells_per_supercell,
            repetitions: d.repetitions,
            z_term: d.z_term_ohm,
            n_large: d.n_large,
        }
    }

    pub fn calibrates(&self) -> bool {
        matches!(self.device.e_j2_ghz, EJ2::Keyword(_))
    }

    /// Signal grid in Hz.
    pub fn signal_grid(&self) -> Vec<f64> {
        let o = &self.operating;
        let n = o.signal_points;
        match (o.signal_start_ghz, o.signal_stop_ghz) {
            (Some(a), Some(b)) => linspace(a * 1e9, b * 1e9, n),
            _ => (1..=n).map(|i| o.fp_ghz * 1e9 * i as f64 / (n + 1) as f64).collect(),
        }
    }

    /// Fills unset frequency and flux grids with the per-command defaults so
    /// the echo records what actually ran.
    pub fn resolve_grids(&mut self, f: Option<(f64, f64, usize)>, flux: Option<(f64, f64, usize)>) {
        let o = &mut self.operating;
        if let Some(f) = f {
            o.f_start_ghz.get_or_insert(f.0);
            o.f_stop_ghz.get_or_insert(f.1);
            o.f_points.get_or_insert(f.2);
        }
        if let Some(x) = flux {
            o.flux_start.get_or_insert(x.0);
            o.flux_stop.get_or_insert(x.1);
            o.flux_points.get_or_insert(x.2);
        }
    }

    pub fn freq_grid(&self) -> Vec<f64> {
        let o = &self.operating;
        linspace(
            o.f_start_ghz.unwrap_or(0.1) * 1e9,
            o.f_stop_ghz.unwrap_or(30.0) * 1e9,
            o.f_points.unwrap_or(300),
        )
    }

    pub fn flux_grid(&self) -> Vec<f64> {
        let o = &self.operating;
        twpa_core::snail::flux_grid(
            o.flux_start.unwrap_or(0.0),
            o.flux_stop.unwrap_or(0.5),
            o.flux_points.unwrap_or(501),
        )
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

pub fn parse_tier(s: &str) -> Result<Tier, CliError> {
    match s {
        "minimal" => Ok(Tier::Minimal),
        "extended" => Ok(Tier::Extended),
        _ => s
            .strip_prefix("cascade-")
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .map(Tier::Cascade)
            .ok_or_else(|| {
                CliError::Config(format!(
                    "execution.tier must be \"minimal\", \"extended\" or \"cascade-N\" (N >= 1), got \"{s}\""
                ))
            }),
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_the_echo() {
        let cfg = RunConfig::default();
        let back = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
        let mut custom = cfg.clone();
        custom.device.e_j2_ghz = EJ2::Ghz(1087.5);
        custom.operating.signal_start_ghz = Some(1.0);
        custom.resolve_grids(Some((3.0, 13.0, 10)), Some((0.0, 0.5, 11)));
        assert_eq!(RunConfig::parse(&custom.to_toml()).unwrap(), custom);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = RunConfig::parse("[device]\nalpah = 0.2\n").unwrap_err();
        assert!(matches!(e, CliError::Config(ref m) if m.contains("alpah")), "{e:?}");
        assert!(RunConfig::parse("[extra]\nx = 1\n").is_err());
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(RunConfig::parse("[device]\ne_j2_ghz = \"fit\"\n").is_err());
        assert!(RunConfig::parse("[execution]\ntier = \"cascade-0\"\n").is_err());
        assert!(RunConfig::parse("[device]\nloading_ratio = -1.0\n").is_err());
        assert_eq!(parse_tier("cascade-4").unwrap(), Tier::Cascade(4));
    }

    #[test]
    fn overrides_and_grids() {
        let mut cfg = RunConfig::default();
        cfg.apply(&Overrides {
            cells: Some(60),
            fp_ghz: Some(6.0),
            signal_points: Some(5),
            ..Overrides::default()
        })
        .unwrap();
        assert_eq!(cfg.device.repetitions, 20);
        assert_eq!(cfg.signal_grid(), vec![1e9, 2e9, 3e9, 4e9, 5e9]);
        assert!(cfg.clone().apply(&Overrides { cells: Some(2), ..Overrides::default() }).is_err());
        assert_eq!(cfg.flux_grid().len(), 501);
    }
}
