//! The ensemble of local experts and the per-scan learning step.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::config::EnsembleConfig;
use crate::error::{Error, Result};
use crate::expert::Expert;
use crate::geometry::{dist, Point};
use crate::measurement::{MeasurementBatch, MeasurementKind};
use crate::partition::{ExpertId, PartitionIndex};
use crate::sparse::{MeanField, SparseGp};

/// Number of measurements used to fit the initial expert.
pub const INIT_SAMPLES: usize = 50;

const MIX_EPS: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct Ensemble {
    experts: BTreeMap<ExpertId, Expert>,
    index: PartitionIndex,
    config: EnsembleConfig,
    scan_counter: u64,
    next_id: u64,
}

/// What one call to [`Ensemble::step`] did.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepReport {
    pub inserted: usize,
    pub updated: usize,
    pub removed: usize,
    pub subdivided: Vec<ExpertId>,
    pub harmonized: Vec<ExpertId>,
}

/// Indices `floor(i * n / k)` for `i < k`, or all of `0..n` when `n <= k`.
pub fn stride_sample(n: usize, k: usize) -> Vec<usize> {
    if n <= k {
        return (0..n).collect();
    }
    (0..k).map(|i| i * n / k).collect()
}

/// Greedy thinning in input order: keeps a point if it is at least
/// `min_dist` from every point kept so far.
pub fn thin(points: &[Point], min_dist: f64) -> Vec<Point> {
    let mut kept: Vec<Point> = Vec::new();
    for p in points {
        if kept.iter().all(|q| dist(p, q) >= min_dist) {
            kept.push(*p);
        }
    }
    kept
}

impl Ensemble {
    /// Single expert fitted to a deterministic subsample of the first batch.
    pub fn init(first: &MeasurementBatch, config: EnsembleConfig) -> Result<Self> {
        config.validate()?;
        if first.is_empty() {
            return Err(Error::Precondition("cannot initialize from an empty batch".into()));
        }
        let sample = first.select(&stride_sample(first.len(), INIT_SAMPLES));
        let surface: Vec<Point> = sample
            .locations()
            .iter()
            .zip(sample.kinds())
            .filter(|(_, k)| **k == MeasurementKind::Surface)
            .map(|(p, _)| *p)
            .collect();
        let seeds = if surface.is_empty() { sample.locations().to_vec() } else { surface };
        let pis = thin(&seeds, config.min_pi_dist);
        let gp = SparseGp::fit(pis, &sample, config.kernel()?, config.sigma2)
            .map_err(|e| e.context("initial expert"))?;
        let id = ExpertId(0);
        let mut experts = BTreeMap::new();
        experts.insert(id, Expert::new(id, gp));
        let mut ens = Ensemble {
            experts,
            index: PartitionIndex::build(Vec::new()),
            config,
            scan_counter: 1,
            next_id: 1,
        };
        ens.rebuild_index();
        Ok(ens)
    }

    /// Reassembles an ensemble from stored experts.
    pub fn from_parts(
        experts: Vec<Expert>,
        config: EnsembleConfig,
        scan_counter: u64,
        next_id: u64,
    ) -> Result<Self> {
        config.validate()?;
        if experts.is_empty() {
            return Err(Error::Precondition("ensemble needs at least one expert".into()));
        }
        let mut map = BTreeMap::new();
        for e in experts {
            if e.id().0 >= next_id {
                return Err(Error::Precondition(format!(
                    "{} not below next id {next_id}",
                    e.id()
                )));
            }
            if map.insert(e.id(), e).is_some() {
                return Err(Error::Precondition("duplicate expert id".into()));
            }
        }
        let mut ens = Ensemble {
            experts: map,
            index: PartitionIndex::build(Vec::new()),
            config,
            scan_counter,
            next_id,
        };
        ens.rebuild_index();
        Ok(ens)
    }

    pub fn experts(&self) -> impl ExactSizeIterator<Item = &Expert> {
        self.experts.values()
    }

    pub fn expert(&self, id: ExpertId) -> Option<&Expert> {
        self.experts.get(&id)
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }

    pub fn index(&self) -> &PartitionIndex {
        &self.index
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    pub fn scan_counter(&self) -> u64 {
        self.scan_counter
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn total_pis(&self) -> usize {
        self.experts.values().map(|e| e.gp().len()).sum()
    }

    pub fn total_primary(&self) -> usize {
        self.experts.values().map(|e| e.primary_count()).sum()
    }

    fn rebuild_index(&mut self) {
        let prim: Vec<(ExpertId, Vec<Point>)> =
            self.experts.values().map(|e| (e.id(), e.primary_pis())).collect();
        self.index = PartitionIndex::from_experts(prim.iter().map(|(id, p)| (*id, p.as_slice())));
    }

    /// True when the partition sites are exactly the experts' primary PIs.
    pub fn is_consistent(&self) -> bool {
        let mut expected: Vec<(ExpertId, [u64; 2])> = self
            .experts
            .values()
            .flat_map(|e| e.primary_pis().into_iter().map(move |p| (e.id(), [p.x.to_bits(), p.y.to_bits()])))
            .collect();
        let mut actual: Vec<(ExpertId, [u64; 2])> = self
            .index
            .sites()
            .iter()
            .map(|s| (s.expert, [s.location.x.to_bits(), s.location.y.to_bits()]))
            .collect();
        expected.sort_unstable();
        actual.sort_unstable();
        expected == actual
    }

    /// Runs one learning step on a new batch: extension, update,
    /// contraction, subdivision and harmonization.
    pub fn step(&mut self, batch: &MeasurementBatch) -> Result<StepReport> {
        let scan = self.scan_counter;
        let ctx = |e: Error| e.context(format!("scan {scan}"));
        let cfg = self.config.clone();
        let mut report = StepReport::default();

        // (1) extension
        let index = &self.index;
        let consumed: Vec<Vec<usize>> = self
            .experts
            .par_iter_mut()
            .map(|(_, e)| e.extend(batch, index, &cfg))
            .collect::<Result<_>>()
            .map_err(ctx)?;
        let consumed: BTreeSet<usize> = consumed.into_iter().flatten().collect();
        report.inserted = consumed.len();
        let consumed: Vec<usize> = consumed.into_iter().collect();

        // (2)
        self.rebuild_index();

        // (3) update
        let index = &self.index;
        let counts: Vec<usize> = self
            .experts
            .par_iter_mut()
            .map(|(_, e)| e.update(batch, index, &consumed, &cfg))
            .collect::<Result<_>>()
            .map_err(ctx)?;
        report.updated = counts.into_iter().sum();

        // (4) contraction
        let removed: Vec<usize> = self
            .experts
            .par_iter_mut()
            .map(|(_, e)| e.contract(batch, index, &cfg).map(|r| r.len()))
            .collect::<Result<_>>()
            .map_err(ctx)?;
        report.removed = removed.into_iter().sum();

        // (5)
        self.rebuild_index();

        // (6) subdivision
        let oversized: Vec<ExpertId> = self
            .experts
            .values()
            .filter(|e| e.primary_count() > cfg.n_max)
            .map(|e| e.id())
            .collect();
        if !oversized.is_empty() {
            for id in &oversized {
                let e = self.experts.remove(id).expect("listed above");
                let next = &mut self.next_id;
                let parts = e
                    .subdivide(&cfg, || {
                        let id = ExpertId(*next);
                        *next += 1;
                        id
                    })
                    .map_err(ctx)?;
                for p in parts {
                    self.experts.insert(p.id(), p);
                }
            }
            self.rebuild_index();
        }
        report.subdivided = oversized;

        // (7)
        report.harmonized = self.harmonize_round().map_err(ctx)?;

        self.scan_counter += 1;
        Ok(report)
    }

    /// One harmonization pass. Every expert whose pooled boundary discrepancy
    /// exceeds `t_del` is harmonized against its neighbors; all discrepancies
    /// and neighbor models are read from a snapshot taken before the pass.
    /// Returns the harmonized experts in ascending id order.
    pub fn harmonize_round(&mut self) -> Result<Vec<ExpertId>> {
        let cfg = &self.config;
        let snapshot = self.experts.clone();
        let index = &self.index;
        let harmonized: Vec<Option<ExpertId>> = self
            .experts
            .par_iter_mut()
            .map(|(id, e)| -> Result<Option<ExpertId>> {
                let pooled = snapshot[id].pooled_discrepancy(index, cfg, |j| snapshot.get(&j))?;
                match pooled.mean() {
                    Some(d) if d > cfg.t_del => {
                        let nbs: Vec<&Expert> =
                            index.neighbors(*id)?.iter().map(|j| &snapshot[j]).collect();
                        e.harmonize(&nbs, cfg)?;
                        Ok(Some(*id))
                    }
                    _ => Ok(None),
                }
            })
            .collect::<Result<_>>()?;
        Ok(harmonized.into_iter().flatten().collect())
    }

    /// Pooled discrepancy of one expert against all its current neighbors.
    pub fn discrepancy(&self, id: ExpertId) -> Result<crate::expert::Discrepancy> {
        let e = self
            .experts
            .get(&id)
            .ok_or_else(|| Error::Precondition(format!("{id} not in ensemble")))?;
        e.pooled_discrepancy(&self.index, &self.config, |j| self.experts.get(&j))
    }

    /// Responsible expert and its posterior mean at every point.
    pub fn predict_attributed(&self, xs: &[Point]) -> Vec<(ExpertId, f64)> {
        let fields: BTreeMap<ExpertId, MeanField<'_>> =
            self.experts.iter().map(|(id, e)| (*id, e.gp().mean_field())).collect();
        xs.par_iter()
            .map(|x| {
                let id = self.index.responsible_expert(x).expect("ensemble is never empty");
                (id, fields[&id].at(x))
            })
            .collect()
    }

    /// Map prediction where every point takes the mean of its responsible
    /// expert.
    pub fn predict_individual(&self, xs: &[Point]) -> Vec<f64> {
        self.predict_attributed(xs).into_iter().map(|(_, m)| m).collect()
    }

    /// Distance-weighted mixture of nearby experts' means. An expert
    /// contributes if its nearest primary PI is within `mix_radius`; the
    /// responsible expert always does. Weights are `1 / (d² + 1e-6)` with `d`
    /// the distance to the expert's nearest primary PI, normalized to one.
    pub fn predict_mixture(&self, xs: &[Point]) -> Vec<f64> {
        let parts: Vec<(ExpertId, Vec<Point>, MeanField<'_>)> = self
            .experts
            .iter()
            .map(|(id, e)| (*id, e.primary_pis(), e.gp().mean_field()))
            .collect();
        xs.par_iter()
            .map(|x| {
                let owner = self.index.responsible_expert(x).expect("ensemble is never empty");
                let mut num = 0.0;
                let mut den = 0.0;
                for (id, pis, field) in &parts {
                    let d = pis.iter().map(|p| dist(p, x)).fold(f64::INFINITY, f64::min);
                    if d <= self.config.mix_radius || *id == owner {
                        let w = 1.0 / (d * d + MIX_EPS);
                        num += w * field.at(x);
                        den += w;
                    }
                }
                num / den
            })
            .collect()
    }

    /// Contributing experts and their normalized mixture weights at `x`.
    pub fn mixture_weights(&self, x: &Point) -> Vec<(ExpertId, f64)> {
        let owner = self.index.responsible_expert(x).expect("ensemble is never empty");
        let mut out: Vec<(ExpertId, f64)> = self
            .experts
            .values()
            .filter_map(|e| {
                let d = e.nearest_primary_distance(x);
                (d <= self.config.mix_radius || e.id() == owner).then(|| (e.id(), 1.0 / (d * d + MIX_EPS)))
            })
            .collect();
        let total: f64 = out.iter().map(|(_, w)| w).sum();
        for (_, w) in &mut out {
            *w /= total;
        }
        out
    }
}
