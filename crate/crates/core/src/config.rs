use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::ThinPlate;

/// Parameters of the ensemble learner. Lengths in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    /// Observation noise variance (m²).
    pub sigma2: f64,
    /// Extension stops once every candidate error is below this.
    pub t_add: f64,
    /// Contraction and harmonization threshold.
    pub t_del: f64,
    pub min_pi_dist: f64,
    pub n_min: usize,
    pub n_new: usize,
    pub n_max: usize,
    #[serde(rename = "kernel_R")]
    pub kernel_range: f64,
    pub aux_offset: f64,
    pub scan_stride: usize,
    pub k_per_edge: usize,
    pub n_secondary_per_neighbor: usize,
    pub update_margin: f64,
    pub mix_radius: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            sigma2: 0.01,
            t_add: 0.02,
            t_del: 0.01,
            min_pi_dist: 0.1,
            n_min: 10,
            n_new: 50,
            n_max: 100,
            kernel_range: 20.0,
            aux_offset: 0.1,
            scan_stride: 100,
            k_per_edge: 5,
            n_secondary_per_neighbor: 10,
            update_margin: 1.0,
            mix_radius: 2.0,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Precondition(msg));
        if !(self.n_min < self.n_new && self.n_new <= self.n_max) {
            return bad(format!(
                "expert sizes must satisfy n_min < n_new <= n_max, got {} / {} / {}",
                self.n_min, self.n_new, self.n_max
            ));
        }
        for (name, v) in [
            ("sigma2", self.sigma2),
            ("t_add", self.t_add),
            ("t_del", self.t_del),
            ("min_pi_dist", self.min_pi_dist),
            ("kernel_R", self.kernel_range),
            ("aux_offset", self.aux_offset),
            ("update_margin", self.update_margin),
            ("mix_radius", self.mix_radius),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("scan_stride", self.scan_stride),
            ("k_per_edge", self.k_per_edge),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<ThinPlate> {
        ThinPlate::new(self.kernel_range)
    }
}
