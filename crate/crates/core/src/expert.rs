//! Local experts and their lifecycle: extension, update, contraction,
//! subdivision and harmonization.
//!
//! An expert is a [`SparseGp`] whose pseudo-inputs are tagged either primary
//! (they define the expert's area of responsibility) or secondary (copies of
//! neighbors' primary pseudo-inputs that make adjacent experts agree).

use nalgebra::DMatrix;

use crate::cluster::ward;
use crate::config::EnsembleConfig;
use crate::error::{Error, Result};
use crate::geometry::{dist, Point};
use crate::measurement::MeasurementBatch;
use crate::partition::{ExpertId, PartitionIndex};
use crate::sparse::SparseGp;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PiRole {
    Primary,
    /// Copied from the primary set of the given expert.
    Secondary(ExpertId),
}

#[derive(Clone, Debug)]
pub struct Expert {
    id: ExpertId,
    gp: SparseGp,
    // one role per pseudo-input of `gp`, same order
    roles: Vec<PiRole>,
}

/// Sum of absolute prediction differences on boundary samples, kept as a
/// (sum, count) pair so contributions from several neighbors can be pooled.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Discrepancy {
    pub sum: f64,
    pub count: usize,
}

impl Discrepancy {
    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

impl std::ops::Add for Discrepancy {
    type Output = Discrepancy;
    fn add(self, o: Discrepancy) -> Discrepancy {
        Discrepancy {
            sum: self.sum + o.sum,
            count: self.count + o.count,
        }
    }
}

impl std::iter::Sum for Discrepancy {
    fn sum<I: Iterator<Item = Discrepancy>>(iter: I) -> Self {
        iter.fold(Discrepancy::default(), |a, b| a + b)
    }
}

impl Expert {
    /// Expert whose pseudo-inputs are all primary.
    pub fn new(id: ExpertId, gp: SparseGp) -> Self {
        let roles = vec![PiRole::Primary; gp.len()];
        Expert { id, gp, roles }
    }

    pub fn from_parts(id: ExpertId, gp: SparseGp, roles: Vec<PiRole>) -> Result<Self> {
        if roles.len() != gp.len() {
            return Err(Error::Precondition(format!(
                "{id}: {} roles for {} pseudo-inputs",
                roles.len(),
                gp.len()
            )));
        }
        if !roles.contains(&PiRole::Primary) {
            return Err(Error::Precondition(format!("{id} has no primary pseudo-input")));
        }
        Ok(Expert { id, gp, roles })
    }

    pub fn id(&self) -> ExpertId {
        self.id
    }

    pub fn gp(&self) -> &SparseGp {
        &self.gp
    }

    pub fn roles(&self) -> &[PiRole] {
        &self.roles
    }

    pub fn primary_count(&self) -> usize {
        self.roles.iter().filter(|r| **r == PiRole::Primary).count()
    }

    pub fn secondary_count(&self) -> usize {
        self.roles.len() - self.primary_count()
    }

    pub fn primary_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == PiRole::Primary)
            .map(|(i, _)| i)
    }

    pub fn primary_pis(&self) -> Vec<Point> {
        self.primary_indices().map(|i| self.gp.pis()[i]).collect()
    }

    pub fn secondary_pis(&self) -> Vec<(Point, ExpertId)> {
        self.roles
            .iter()
            .zip(self.gp.pis())
            .filter_map(|(r, p)| match r {
                PiRole::Secondary(o) => Some((*p, *o)),
                PiRole::Primary => None,
            })
            .collect()
    }

    pub fn nearest_primary_distance(&self, p: &Point) -> f64 {
        self.primary_indices()
            .map(|i| dist(&self.gp.pis()[i], p))
            .fold(f64::INFINITY, f64::min)
    }

    fn too_close(&self, p: &Point, min_dist: f64) -> bool {
        self.gp.pis().iter().any(|q| dist(p, q) < min_dist)
    }

    /// Greedy extension with the batch entries this expert is responsible for.
    /// Returns the indices of the entries turned into new primary PIs.
    pub fn extend(
        &mut self,
        batch: &MeasurementBatch,
        index: &PartitionIndex,
        cfg: &EnsembleConfig,
    ) -> Result<Vec<usize>> {
        let candidates: Vec<usize> = (0..batch.len())
            .filter(|&i| index.responsible_expert(&batch.locations()[i]) == Some(self.id))
            .collect();
        self.extend_with(batch, candidates, cfg)
    }

    /// Extension over an explicit candidate list.
    ///
    /// Candidates within `min_pi_dist` of an existing PI are dropped. Then,
    /// repeatedly, the candidate with the largest absolute error is inserted
    /// as a primary PI and used as a measurement, until the largest error is
    /// below `t_add`.
    pub fn extend_with(
        &mut self,
        batch: &MeasurementBatch,
        mut candidates: Vec<usize>,
        cfg: &EnsembleConfig,
    ) -> Result<Vec<usize>> {
        let locs = batch.locations();
        let ys = batch.values();
        candidates.retain(|&i| !self.too_close(&locs[i], cfg.min_pi_dist));
        let mut consumed = Vec::new();
        while !candidates.is_empty() {
            let field = self.gp.mean_field();
            let mut best = (0, f64::NEG_INFINITY);
            for (pos, &i) in candidates.iter().enumerate() {
                let err = (ys[i] - field.at(&locs[i])).abs();
                if err > best.1 {
                    best = (pos, err);
                }
            }
            if best.1 < cfg.t_add {
                break;
            }
            let j = candidates.remove(best.0);
            let x = locs[j];
            self.gp.insert(x).map_err(|e| e.context(self.id))?;
            self.roles.push(PiRole::Primary);
            self.gp.update(&x, ys[j]).map_err(|e| e.context(self.id))?;
            consumed.push(j);
            candidates.retain(|&i| dist(&locs[i], &x) >= cfg.min_pi_dist);
        }
        Ok(consumed)
    }

    /// Entries close enough to this expert's area to be used for its update:
    /// the distance to its nearest primary PI exceeds the distance to the
    /// globally nearest primary PI by at most `update_margin`.
    pub fn update_entries(
        &self,
        batch: &MeasurementBatch,
        index: &PartitionIndex,
        consumed: &[usize],
        cfg: &EnsembleConfig,
    ) -> Vec<usize> {
        let own = self.primary_pis();
        (0..batch.len())
            .filter(|i| !consumed.contains(i))
            .filter(|&i| {
                let x = &batch.locations()[i];
                let Some(global) = index.nearest_distance(x) else {
                    return false;
                };
                let mine = own.iter().map(|p| dist(p, x)).fold(f64::INFINITY, f64::min);
                mine - global <= cfg.update_margin
            })
            .collect()
    }

    /// Sequential measurement updates for the eligible batch entries, in
    /// batch order, skipping entries already consumed by extension.
    pub fn update(
        &mut self,
        batch: &MeasurementBatch,
        index: &PartitionIndex,
        consumed: &[usize],
        cfg: &EnsembleConfig,
    ) -> Result<usize> {
        let entries = self.update_entries(batch, index, consumed, cfg);
        self.update_with(batch, &entries)?;
        Ok(entries.len())
    }

    pub fn update_with(&mut self, batch: &MeasurementBatch, entries: &[usize]) -> Result<()> {
        for &i in entries {
            let (x, y, _) = batch.get(i);
            self.gp.update(&x, y).map_err(|e| e.context(self.id))?;
        }
        Ok(())
    }

    /// Greedy removal of primary PIs. Returns the removed locations in order.
    pub fn contract(
        &mut self,
        batch: &MeasurementBatch,
        index: &PartitionIndex,
        cfg: &EnsembleConfig,
    ) -> Result<Vec<Point>> {
        let region: Vec<usize> = (0..batch.len())
            .filter(|&i| index.responsible_expert(&batch.locations()[i]) == Some(self.id))
            .collect();
        self.contract_with(batch, &region, cfg)
    }

    /// Contraction against an explicit set of region entries.
    ///
    /// The reference set is the primary PIs at entry (with their current
    /// means) plus the region's measurements. Each round removes the primary
    /// PI whose marginalization gives the smallest mean absolute deviation
    /// from the references, as long as that deviation is below `t_del` and
    /// more than `n_min` primary PIs remain.
    ///
    /// Predictions with PI `q` removed are obtained in closed form from
    /// `P = K_uu⁻¹`: with `α = P μ`, dropping `q` changes the weights to
    /// `α - P[:, q] α_q / P_qq`, so every candidate costs one column update.
    pub fn contract_with(
        &mut self,
        batch: &MeasurementBatch,
        region: &[usize],
        cfg: &EnsembleConfig,
    ) -> Result<Vec<Point>> {
        let floor = cfg.n_min.max(1);
        let mut removed = Vec::new();
        if self.primary_count() <= floor {
            return Ok(removed);
        }
        let primaries: Vec<usize> = self.primary_indices().collect();
        let mut eval_pts: Vec<Point> = primaries.iter().map(|&i| self.gp.pis()[i]).collect();
        let mut targets: Vec<f64> = primaries.iter().map(|&i| self.gp.mean()[i]).collect();
        let n_ref = eval_pts.len();
        for &i in region {
            eval_pts.push(batch.locations()[i]);
            targets.push(batch.values()[i]);
        }
        let mut slot_of: Vec<Option<usize>> = vec![None; self.gp.len()];
        for (slot, &i) in primaries.iter().enumerate() {
            slot_of[i] = Some(slot);
        }
        let mut alive = vec![true; n_ref];
        let mut alive_count = n_ref;

        let kxu = self.gp.kernel().matrix(&eval_pts, self.gp.pis());
        let mut p = self.gp.kuu_factor().inverse();
        let mut alpha = &p * self.gp.mean();
        let mut b = &kxu * &p;
        let mut base = &kxu * &alpha;

        while self.primary_count() > floor {
            let denom = (alive_count + region.len()) as f64;
            let mut best: Option<(usize, f64)> = None;
            for q in 0..self.gp.len() {
                if self.roles[q] != PiRole::Primary {
                    continue;
                }
                let coef = alpha[q] / p[(q, q)];
                let mut sum = 0.0;
                for (r, t) in targets.iter().enumerate() {
                    if r < n_ref && !alive[r] {
                        continue;
                    }
                    sum += (t - (base[r] - b[(r, q)] * coef)).abs();
                }
                let err = sum / denom;
                if best.is_none_or(|(_, e)| err < e) {
                    best = Some((q, err));
                }
            }
            let Some((q, err)) = best else { break };
            if err.is_nan() || err >= cfg.t_del {
                break;
            }

            let pqq = p[(q, q)];
            let coef = alpha[q] / pqq;
            base.axpy(-coef, &b.column(q).clone_owned(), 1.0);
            alpha.axpy(-coef, &p.column(q).clone_owned(), 1.0);
            let bq = b.column(q).clone_owned();
            let pq = p.column(q).clone_owned();
            b.ger(-1.0 / pqq, &bq, &pq, 1.0);
            p.ger(-1.0 / pqq, &pq, &pq, 1.0);
            alpha = alpha.remove_row(q);
            b = b.remove_column(q);
            p = p.remove_row(q).remove_column(q);

            removed.push(self.gp.pis()[q]);
            self.gp.remove(q).map_err(|e| e.context(self.id))?;
            self.roles.remove(q);
            if let Some(slot) = slot_of.remove(q) {
                alive[slot] = false;
                alive_count -= 1;
            }
        }
        Ok(removed)
    }

    /// Splits an expert with more than `n_max` primary PIs by Ward clustering
    /// its primary PIs into groups of at most `n_new`. Each group keeps the
    /// matching posterior sub-vector and sub-block; secondary PIs are dropped.
    pub fn subdivide(
        self,
        cfg: &EnsembleConfig,
        mut next_id: impl FnMut() -> ExpertId,
    ) -> Result<Vec<Expert>> {
        if self.primary_count() <= cfg.n_max {
            return Ok(vec![self]);
        }
        let primaries: Vec<usize> = self.primary_indices().collect();
        let pts: Vec<Point> = primaries.iter().map(|&i| self.gp.pis()[i]).collect();
        let clusters = ward(&pts).cut_max_size(cfg.n_new);
        clusters
            .into_iter()
            .map(|members| {
                let idx: Vec<usize> = members.iter().map(|&m| primaries[m]).collect();
                let gp = self.gp.select(&idx).map_err(|e| e.context(self.id))?;
                Ok(Expert::new(next_id(), gp))
            })
            .collect()
    }

    /// Mean absolute difference between this expert's and `neighbor`'s mean
    /// on their shared Voronoi boundary.
    pub fn boundary_discrepancy(
        &self,
        neighbor: &Expert,
        index: &PartitionIndex,
        cfg: &EnsembleConfig,
    ) -> Result<Discrepancy> {
        let samples = index.boundary_samples(self.id, neighbor.id, cfg.k_per_edge)?;
        let mine = self.gp.mean_field();
        let theirs = neighbor.gp.mean_field();
        let sum = samples.iter().map(|x| (mine.at(x) - theirs.at(x)).abs()).sum();
        Ok(Discrepancy {
            sum,
            count: samples.len(),
        })
    }

    /// Pooled discrepancy against every neighbor in the partition. `lookup`
    /// resolves neighbor ids (normally against a pre-step snapshot).
    pub fn pooled_discrepancy<'a>(
        &self,
        index: &PartitionIndex,
        cfg: &EnsembleConfig,
        lookup: impl Fn(ExpertId) -> Option<&'a Expert>,
    ) -> Result<Discrepancy> {
        let mut total = Discrepancy::default();
        for &j in index.neighbors(self.id)? {
            let nb = lookup(j)
                .ok_or_else(|| Error::Precondition(format!("{j} missing from ensemble")))?;
            total = total + self.boundary_discrepancy(nb, index, cfg)?;
        }
        Ok(total)
    }

    /// Replaces all secondary PIs with a fresh subsample of each neighbor's
    /// primary PIs, then updates with the neighbors' posterior means there as
    /// pseudo-measurements.
    pub fn harmonize(&mut self, neighbors: &[&Expert], cfg: &EnsembleConfig) -> Result<()> {
        for i in (0..self.roles.len()).rev() {
            if self.roles[i] != PiRole::Primary {
                self.gp.remove(i).map_err(|e| e.context(self.id))?;
                self.roles.remove(i);
            }
        }
        let own = self.primary_pis();
        let mut pseudo = Vec::new();
        for nb in neighbors {
            let chosen = self.subsample_neighbor(nb, &own, cfg);
            let field = nb.gp.mean_field();
            for x in chosen {
                let y = field.at(&x);
                self.gp.insert(x).map_err(|e| e.context(self.id))?;
                self.roles.push(PiRole::Secondary(nb.id));
                pseudo.push((x, y));
            }
        }
        for (x, y) in pseudo {
            self.gp.update(&x, y).map_err(|e| e.context(self.id))?;
        }
        Ok(())
    }

    /// Farthest-point subsample of `nb`'s primary PIs, seeded with the one
    /// closest to this expert's primary PIs. Points closer than
    /// `min_pi_dist` to one of our PIs are skipped.
    fn subsample_neighbor(&self, nb: &Expert, own: &[Point], cfg: &EnsembleConfig) -> Vec<Point> {
        let cand: Vec<Point> = nb
            .primary_pis()
            .into_iter()
            .filter(|p| !self.too_close(p, cfg.min_pi_dist))
            .collect();
        let limit = cfg.n_secondary_per_neighbor.min(cand.len());
        if limit == 0 {
            return Vec::new();
        }
        let to_own = |p: &Point| own.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min);
        let mut seed = 0;
        for (i, p) in cand.iter().enumerate() {
            if to_own(p) < to_own(&cand[seed]) {
                seed = i;
            }
        }
        let mut chosen = vec![seed];
        let mut gap: Vec<f64> = cand.iter().map(|p| dist(p, &cand[seed])).collect();
        while chosen.len() < limit {
            let mut far = None;
            for (i, g) in gap.iter().enumerate() {
                if *g > 0.0 && far.is_none_or(|(_, best)| *g > best) {
                    far = Some((i, *g));
                }
            }
            let Some((next, _)) = far else { break };
            chosen.push(next);
            for (i, p) in cand.iter().enumerate() {
                gap[i] = gap[i].min(dist(p, &cand[next]));
            }
        }
        chosen.into_iter().map(|i| cand[i]).collect()
    }
}

/// Permutation that lists primary PIs first, then secondaries, each in
/// their current order.
pub fn primary_first_order(roles: &[PiRole]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..roles.len()).filter(|&i| roles[i] == PiRole::Primary).collect();
    order.extend((0..roles.len()).filter(|&i| roles[i] != PiRole::Primary));
    order
}

pub(crate) fn permute_cov(cov: &DMatrix<f64>, order: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(order.len(), order.len(), |a, b| cov[(order[a], order[b])])
}
