//! Flat JSON experiment config. Every key has a default; the defaults are the
//! canonical desk-scale experiment and are printed by `print-config`.

use std::path::Path;

use kfp_core::initial::InitialData;
use kfp_core::model::{ConfinementModel, CutoffSpec};
use kfp_core::phase_grid::PhaseGrid;
use kfp_core::semigroup::Scheme;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub gamma: f64,
    pub nx: usize,
    pub nv: usize,
    pub x_max: f64,
    pub v_max: f64,
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub record_every: usize,
    /// `m = e^{eps_weight H^delta_weight}`.
    pub eps_weight: f64,
    pub delta_weight: f64,
    /// Exponent in `G^{-(1+delta)/2}` for smoothing and `L^1` growth.
    pub delta: f64,
    /// `m = H^k`.
    pub k: f64,
    pub theta: f64,
    /// Coupling in the modified inner product.
    pub eps_scalar: f64,
    /// Extra decay in `G^{-(1/2 + eps_space)}`.
    pub eps_space: f64,
    /// Integrability exponent: drift and identities use it as is, the decay
    /// study needs 1 or 2.
    pub p: f64,
    #[serde(rename = "K")]
    pub big_k: f64,
    #[serde(rename = "R")]
    pub r: f64,
    /// Regularization horizon.
    pub eta: f64,
    /// Random fields in the coercivity study.
    pub samples: usize,
    pub seed: u64,
    pub initial: InitialData,
    pub gammas: Vec<f64>,
    pub decay_nx: usize,
    pub decay_nv: usize,
    pub decay_x_max: f64,
    pub decay_v_max: f64,
    pub decay_dt: f64,
    pub decay_t_end: f64,
    pub decay_record_every: usize,
    pub decay_t_compare: f64,
    pub decay_initial: InitialData,
    /// `[t0, t1]`; `null` means `[1, 0.9 decay_t_end]`.
    pub fit_window: Option<[f64; 2]>,
    pub output: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            nx: 129,
            nv: 129,
            x_max: 8.0,
            v_max: 8.0,
            dt: 0.05,
            t_end: 10.0,
            scheme: Scheme::ImplicitEuler,
            record_every: 2,
            eps_weight: 0.05,
            delta_weight: 0.25,
            delta: 0.5,
            k: 2.0,
            theta: 0.5,
            eps_scalar: 0.01,
            eps_space: 0.05,
            p: 2.0,
            big_k: 1.0,
            r: 4.0,
            eta: 1.0,
            samples: 100,
            seed: 1,
            initial: InitialData::Dipole { x0: 2.0, width: 1.0 },
            gammas: vec![0.4, 0.6, 0.8],
            decay_nx: 241,
            decay_nv: 49,
            decay_x_max: 30.0,
            decay_v_max: 7.0,
            decay_dt: 0.05,
            decay_t_end: 60.0,
            decay_record_every: 4,
            decay_t_compare: 20.0,
            decay_initial: InitialData::Dipole { x0: 4.0, width: 1.0 },
            fit_window: None,
            output: "kfp-out".into(),
        }
    }
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub gamma: Option<f64>,
    pub nx: Option<usize>,
    pub nv: Option<usize>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub big_k: Option<f64>,
    pub r: Option<f64>,
    pub out: Option<String>,
    pub seed: Option<u64>,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| bad(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Applies overrides; `decay` selects the decay-study grid and horizon.
    pub fn apply(&mut self, o: &Overrides, decay: bool) {
        if let Some(v) = o.gamma {
            self.gamma = v;
        }
        let (nx, nv, dt, t_end) = if decay {
            (&mut self.decay_nx, &mut self.decay_nv, &mut self.decay_dt, &mut self.decay_t_end)
        } else {
            (&mut self.nx, &mut self.nv, &mut self.dt, &mut self.t_end)
        };
        if let Some(v) = o.nx {
            *nx = v;
        }
        if let Some(v) = o.nv {
            *nv = v;
        }
        if let Some(v) = o.dt {
            *dt = v;
        }
        if let Some(v) = o.t_end {
            *t_end = v;
        }
        if let Some(v) = o.big_k {
            self.big_k = v;
        }
        if let Some(v) = o.r {
            self.r = v;
        }
        if let Some(v) = &o.out {
            self.output = v.clone();
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        ConfinementModel::new(self.gamma).map_err(|e| bad(e.to_string()))?;
        self.grid()?;
        self.decay_grid()?;
        CutoffSpec::new(self.big_k, self.r).map_err(|e| bad(e.to_string()))?;
        let checks: [(bool, String); 14] = [
            (self.dt > 0.0 && self.t_end > 0.0, format!("need dt, t_end > 0, got {}, {}", self.dt, self.t_end)),
            (self.record_every >= 1, "record_every must be >= 1".into()),
            (self.eps_weight > 0.0, format!("eps_weight = {} must be > 0", self.eps_weight)),
            (
                self.delta_weight > 0.0 && self.delta_weight <= 0.5 * self.gamma,
                format!("delta_weight = {} outside (0, gamma/2]", self.delta_weight),
            ),
            ((0.0..1.0).contains(&self.delta), format!("delta = {} outside [0, 1)", self.delta)),
            (self.k >= 0.0, format!("k = {} < 0", self.k)),
            (in_unit(self.theta), format!("theta = {} outside (0, 1)", self.theta)),
            (self.eps_scalar >= 0.0 && self.eps_space >= 0.0, "eps_scalar and eps_space must be >= 0".into()),
            (self.p >= 1.0, format!("p = {} < 1", self.p)),
            (self.eta > 0.0 && self.samples >= 1, "need eta > 0 and samples >= 1".into()),
            (self.gammas.iter().all(|&g| in_unit(g)), format!("gammas {:?} must lie in (0, 1)", self.gammas)),
            (
                self.decay_dt > 0.0 && self.decay_t_end > self.decay_t_compare && self.decay_record_every >= 1,
                "need decay_dt > 0, decay_t_end > decay_t_compare, decay_record_every >= 1".into(),
            ),
            (
                self.fit_window.is_none_or(|[a, b]| 0.0 <= a && a < b && b <= self.decay_t_end),
                format!("fit_window {:?} must satisfy 0 <= t0 < t1 <= decay_t_end", self.fit_window),
            ),
            (!self.output.is_empty(), "output must not be empty".into()),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(bad(msg));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<PhaseGrid<f64>, CliError> {
        PhaseGrid::new(self.nx, self.nv, self.x_max, self.v_max).map_err(|e| bad(e.to_string()))
    }

    pub fn decay_grid(&self) -> Result<PhaseGrid<f64>, CliError> {
        PhaseGrid::new(self.decay_nx, self.decay_nv, self.decay_x_max, self.decay_v_max).map_err(|e| bad(e.to_string()))
    }

    pub fn cutoff(&self) -> CutoffSpec {
        CutoffSpec { k: self.big_k, r: self.r }
    }

    pub fn window(&self) -> (f64, f64) {
        match self.fit_window {
            Some([a, b]) => (a, b),
            None => (1.0, 0.9 * self.decay_t_end),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form, hex encoded. The output directory is
    /// excluded so relocated runs share a hash.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&Self { output: String::new(), ..self.clone() }).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
