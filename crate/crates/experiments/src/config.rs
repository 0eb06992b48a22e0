//! JSON experiment configuration and its resolution into sweep points.

use std::path::{Path, PathBuf};

use qvlasov::grid::make_grid;
use qvlasov::phase_space::{correlation_stride, snap_hbar};
use qvlasov::potential::Sign;
use serde::{Deserialize, Serialize};

use crate::error::{ExpError, ExpResult};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    #[serde(default)]
    pub kernel: KernelConfig,
    pub hbar: Vec<f64>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub initial: InitialData,
    #[serde(default)]
    pub vlasov: VlasovConfig,
    #[serde(default)]
    pub diagnostics: Diagnostics,
    #[serde(default)]
    pub nbody: Option<NBodyConfig>,
    /// Output directory, relative to the config file.
    #[serde(default = "default_output")]
    pub output: String,
    #[serde(default)]
    pub seed: u64,
}

fn default_output() -> String {
    "out".into()
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SignName {
    Defocusing,
    Focusing,
    Off,
}

impl SignName {
    pub fn sign(self) -> Sign {
        match self {
            SignName::Defocusing => Sign::Defocusing,
            SignName::Focusing => Sign::Focusing,
            SignName::Off => Sign::Off,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum EpsilonRule {
    /// `eps = h^gamma`.
    Coupled { gamma: f64 },
    /// Every listed screening length is run against every `h`.
    Fixed { values: Vec<f64> },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub epsilon: EpsilonRule,
    pub sign: SignName,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            epsilon: EpsilonRule::Coupled { gamma: 1.0 },
            sign: SignName::Defocusing,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub length: f64,
    /// One resolution per entry; more than one makes resolution a sweep axis.
    pub n_x: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            length: 51.2,
            n_x: vec![2048],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_final: f64,
    /// `dt = dt_factor * h`.
    pub dt_factor: f64,
    /// Number of intervals between stored binary snapshots.
    pub snapshots: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            t_final: 0.5,
            dt_factor: 0.1,
            snapshots: 5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum InitialData {
    /// `psi = sqrt(j_h * rho0)` for a Gaussian `rho0`.
    Mollified { center: f64, sigma: f64 },
    /// `sqrt(rho0) exp(i S / h)` with `S = -a tanh(x / w) + p x`.
    Wkb {
        center: f64,
        sigma: f64,
        compression: f64,
        width: f64,
        boost: f64,
    },
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::Mollified {
            center: 0.0,
            sigma: 1.5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct VlasovConfig {
    pub length: f64,
    pub n_x: usize,
    pub n_xi: usize,
    pub xi_max: f64,
    pub dt: f64,
}

impl Default for VlasovConfig {
    fn default() -> Self {
        Self {
            length: 25.6,
            n_x: 256,
            n_xi: 256,
            xi_max: 4.0,
            dt: 0.005,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    /// Highest moment written to the moment CSV.
    pub moments_k: usize,
    /// Orders of the moment equations whose weak residual is reported.
    pub residual_k: Vec<usize>,
    /// Orders of the remainder pairings.
    pub remainder_k: Vec<usize>,
    pub remainder_prefactor: String,
    /// Only the twelve-function family exists.
    pub family: String,
    pub write_wigner: bool,
    /// Random states whose Husimi minimum is recorded.
    pub positivity_probes: usize,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            moments_k: 3,
            residual_k: vec![0, 1, 3],
            remainder_k: vec![3],
            remainder_prefactor: "taylor_2alpha".into(),
            family: "standard".into(),
            write_wigner: false,
            positivity_probes: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NBodyConfig {
    pub particles: Vec<usize>,
    pub length: f64,
    pub n_x: usize,
    pub t_final: f64,
    pub dt: f64,
}

/// One `(h, eps, n_x)` combination.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SweepPoint {
    pub id: String,
    pub hbar_requested: f64,
    pub hbar: f64,
    pub epsilon: f64,
    pub n_x: usize,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct HbarSnap {
    pub n_x: usize,
    pub requested: f64,
    pub used: f64,
}

#[derive(Clone, Debug)]
pub struct ResolvedConfig {
    pub config: ExperimentConfig,
    pub output_dir: PathBuf,
    pub points: Vec<SweepPoint>,
    pub snaps: Vec<HbarSnap>,
    pub warnings: Vec<String>,
    /// `"Vlasov-Poisson"` for coupled screening, otherwise the screened limit.
    pub limit_label: String,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> ExpResult<Self> {
        serde_json::from_str(text).map_err(|e| ExpError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> ExpResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExpError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> ExpResult<()> {
        let bad = |m: String| Err(ExpError::Config(m));
        if self.scenario.trim().is_empty() {
            return bad("scenario name is empty".into());
        }
        if self.hbar.is_empty() || self.hbar.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
            return bad(format!("hbar values must be positive, got {:?}", self.hbar));
        }
        match &self.kernel.epsilon {
            EpsilonRule::Coupled { gamma } if !(*gamma > 0.0) => {
                return bad(format!("coupling exponent must be positive, got {gamma}"))
            }
            EpsilonRule::Fixed { values } if values.is_empty() || values.iter().any(|e| !(*e >= 0.0)) => {
                return bad(format!("fixed screening lengths must be nonnegative, got {values:?}"))
            }
            _ => {}
        }
        if !(self.grid.length > 0.0) || self.grid.n_x.is_empty() {
            return bad("grid needs a positive length and at least one resolution".into());
        }
        for &n in &self.grid.n_x {
            make_grid(self.grid.length, n).map_err(ExpError::from)?;
        }
        let t = &self.time;
        if !(t.t_final >= 0.0) || !(t.dt_factor > 0.0) || t.snapshots == 0 {
            return bad("time needs t_final >= 0, dt_factor > 0 and snapshots >= 1".into());
        }
        match self.initial {
            InitialData::Mollified { sigma, .. } | InitialData::Wkb { sigma, .. } if !(sigma > 0.0) => {
                return bad(format!("initial profile width must be positive, got {sigma}"))
            }
            InitialData::Wkb { width, .. } if !(width > 0.0) => {
                return bad(format!("WKB phase width must be positive, got {width}"))
            }
            _ => {}
        }
        let v = &self.vlasov;
        if !(v.length > 0.0) || v.n_x < 8 || v.n_xi < 4 || !(v.xi_max > 0.0) || !(v.dt > 0.0) {
            return bad("vlasov grid or step is invalid".into());
        }
        let d = &self.diagnostics;
        if d.moments_k < 2 || d.moments_k > qvlasov::phase_space::MAX_CLOSED_FORM_ORDER {
            return bad(format!("moments_k must lie in [2, 8], got {}", d.moments_k));
        }
        if d.residual_k.iter().chain(&d.remainder_k).any(|k| *k > qvlasov::moments::MAX_REMAINDER_ORDER) {
            return bad("residual and remainder orders are limited to 6".into());
        }
        qvlasov::moments::RemainderPrefactor::parse(&d.remainder_prefactor)
            .map_err(ExpError::from)?;
        if d.family != "standard" {
            return bad(format!("unknown test-function family {:?}", d.family));
        }
        if let Some(nb) = &self.nbody {
            if nb.particles.is_empty() || nb.particles.iter().any(|p| !(2..=3).contains(p)) {
                return bad(format!("particle numbers must be 2 or 3, got {:?}", nb.particles));
            }
            if !(nb.t_final >= 0.0) || !(nb.dt > 0.0) {
                return bad("nbody time settings are invalid".into());
            }
            make_grid(nb.length, nb.n_x).map_err(ExpError::from)?;
        }
        Ok(())
    }

    /// Validates, snaps every `h` to the Wigner stride rule of each
    /// resolution and expands the sweep axes.
    pub fn resolve(self, config_dir: &Path, output_override: Option<&Path>) -> ExpResult<ResolvedConfig> {
        self.validate()?;
        let mut warnings = Vec::new();
        let mut snaps = Vec::new();
        let mut points = Vec::new();
        for &n in &self.grid.n_x {
            let g = make_grid(self.grid.length, n).map_err(ExpError::from)?;
            for &h in &self.hbar {
                let used = if correlation_stride(&g, h).is_ok() { h } else { snap_hbar(&g, h) };
                if correlation_stride(&g, used).is_err() {
                    return Err(ExpError::Config(format!("no admissible hbar near {h} for n = {n}")));
                }
                if used != h {
                    let msg = format!("hbar {h} is not admissible for n = {n}; using {used}");
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
                snaps.push(HbarSnap { n_x: n, requested: h, used });
                let eps: Vec<f64> = match &self.kernel.epsilon {
                    EpsilonRule::Coupled { gamma } => vec![used.powf(*gamma)],
                    EpsilonRule::Fixed { values } => values.clone(),
                };
                for e in eps {
                    points.push(SweepPoint {
                        id: format!("p{:03}", points.len()),
                        hbar_requested: h,
                        hbar: used,
                        epsilon: e,
                        n_x: n,
                    });
                }
            }
        }
        let limit_label = match self.kernel.epsilon {
            EpsilonRule::Coupled { .. } => "Vlasov-Poisson".to_string(),
            EpsilonRule::Fixed { .. } => "Vlasov with screened kernel".to_string(),
        };
        let output_dir = match output_override {
            Some(p) => p.to_path_buf(),
            None => config_dir.join(&self.output),
        };
        Ok(ResolvedConfig {
            config: self,
            output_dir,
            points,
            snaps,
            warnings,
            limit_label,
        })
    }
}

impl ResolvedConfig {
    pub fn sign(&self) -> Sign {
        self.config.kernel.sign.sign()
    }

    /// Distinct values along a sweep axis.
    pub fn axis_len(&self, f: impl Fn(&SweepPoint) -> f64) -> usize {
        let mut v: Vec<f64> = self.points.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.len()
    }
}
