//! JSON snapshots of a whole ensemble.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::EnsembleConfig;
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::expert::{permute_cov, primary_first_order, Expert, PiRole};
use crate::geometry::point;
use crate::partition::ExpertId;
use crate::sparse::SparseGp;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertRecord {
    pub id: ExpertId,
    /// Primary PIs first, then secondaries.
    pub pis: Vec<[f64; 2]>,
    pub primary_count: usize,
    pub mean: Vec<f64>,
    /// Row-major posterior covariance in `pis` order.
    pub cov: Vec<f64>,
    /// Origin expert of each secondary PI.
    pub secondary_origin: Vec<ExpertId>,
    /// Diagonal jitter in use for the prior factor.
    pub jitter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: EnsembleConfig,
    pub scan_counter: u64,
    pub next_id: u64,
    pub experts: Vec<ExpertRecord>,
}

impl ExpertRecord {
    pub fn from_expert(e: &Expert) -> Self {
        let order = primary_first_order(e.roles());
        let gp = e.gp();
        let cov = permute_cov(gp.cov(), &order);
        ExpertRecord {
            id: e.id(),
            pis: order.iter().map(|&i| [gp.pis()[i].x, gp.pis()[i].y]).collect(),
            primary_count: e.primary_count(),
            mean: order.iter().map(|&i| gp.mean()[i]).collect(),
            // nalgebra is column-major; the transpose gives row-major order
            cov: cov.transpose().as_slice().to_vec(),
            secondary_origin: e.secondary_pis().into_iter().map(|(_, o)| o).collect(),
            jitter: gp.jitter(),
        }
    }

    pub fn to_expert(&self, config: &EnsembleConfig) -> Result<Expert> {
        let n = self.pis.len();
        let bad = |msg: String| Err(Error::Precondition(format!("{}: {msg}", self.id)));
        if self.mean.len() != n || self.cov.len() != n * n {
            return bad(format!("inconsistent sizes for {n} pseudo-inputs"));
        }
        if self.primary_count == 0 || self.primary_count + self.secondary_origin.len() != n {
            return bad("primary/secondary counts do not add up".into());
        }
        let pis = self.pis.iter().map(|p| point(p[0], p[1])).collect();
        let gp = SparseGp::from_parts(
            pis,
            DVector::from_vec(self.mean.clone()),
            DMatrix::from_row_slice(n, n, &self.cov),
            config.kernel()?,
            config.sigma2,
            self.jitter,
        )
        .map_err(|e| e.context(self.id))?;
        let roles = std::iter::repeat_n(PiRole::Primary, self.primary_count)
            .chain(self.secondary_origin.iter().map(|o| PiRole::Secondary(*o)))
            .collect();
        Expert::from_parts(self.id, gp, roles)
    }
}

impl Checkpoint {
    pub fn from_ensemble(ens: &Ensemble) -> Self {
        Checkpoint {
            config: ens.config().clone(),
            scan_counter: ens.scan_counter(),
            next_id: ens.next_id(),
            experts: ens.experts().map(ExpertRecord::from_expert).collect(),
        }
    }

    pub fn to_ensemble(&self) -> Result<Ensemble> {
        let experts = self
            .experts
            .iter()
            .map(|r| r.to_expert(&self.config))
            .collect::<Result<Vec<_>>>()?;
        Ensemble::from_parts(experts, self.config.clone(), self.scan_counter, self.next_id)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::wall_batch;
    use crate::fixtures::spread_points;

    #[test]
    fn round_trip_preserves_predictions() {
        let first = wall_batch(0.0, 6.0, 0.1, 0.01, 0.1, 1);
        let mut ens = Ensemble::init(&first, EnsembleConfig::default()).unwrap();
        for s in 0..3 {
            ens.step(&wall_batch(0.0, 8.0, 0.1, 0.01, 0.1, 10 + s)).unwrap();
        }
        let ck = Checkpoint::from_ensemble(&ens);
        let text = ck.to_json().unwrap();
        let parsed: Checkpoint = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, ck);
        let back = parsed.to_ensemble().unwrap();
        assert_eq!(back.scan_counter(), ens.scan_counter());
        assert_eq!(back.total_pis(), ens.total_pis());
        let xs = spread_points(40, 8.0, 0.0, 5);
        let a = ens.predict_mixture(&xs);
        let b = back.predict_mixture(&xs);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-8);
        }
        // re-serializing the restored ensemble gives the same record
        assert_eq!(Checkpoint::from_ensemble(&back).experts[0].pis, ck.experts[0].pis);
    }

    #[test]
    fn primaries_written_first() {
        let kernel = EnsembleConfig::default().kernel().unwrap();
        let batch = wall_batch(0.0, 2.0, 0.1, 0.0, 0.1, 0);
        let gp = SparseGp::fit(vec![point(0.0, 0.0), point(1.0, 0.0), point(2.0, 0.0)], &batch, kernel, 0.01).unwrap();
        let e = Expert::from_parts(
            ExpertId(4),
            gp.clone(),
            vec![PiRole::Secondary(ExpertId(9)), PiRole::Primary, PiRole::Primary],
        )
        .unwrap();
        let r = ExpertRecord::from_expert(&e);
        assert_eq!(r.pis, vec![[1.0, 0.0], [2.0, 0.0], [0.0, 0.0]]);
        assert_eq!(r.primary_count, 2);
        assert_eq!(r.secondary_origin, vec![ExpertId(9)]);
        assert_eq!(r.mean[2], gp.mean()[0]);
        // row 0 is PI (1, 0): entry (0, 2) is cov between (1, 0) and (0, 0)
        assert_eq!(r.cov[2], gp.cov()[(1, 0)]);
        assert_eq!(r.cov[3], gp.cov()[(2, 1)]);
    }
}
