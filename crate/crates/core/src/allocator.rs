//! Membership plans: which points train which model.
//!
//! Reference plans put every point in exactly `p` of `k` models, drawn
//! independently per point. Target plans are complementary half-splits: model
//! `2j` and `2j + 1` partition the population for every pair `j`.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    Reference,
    Target,
}

/// `N x k` membership matrix plus the parameters that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationPlan {
    n_points: usize,
    n_models: usize,
    per_point: usize,
    kind: PlanKind,
    seed: u64,
    membership: Vec<bool>,
}

impl AllocationPlan {
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_models(&self) -> usize {
        self.n_models
    }

    /// `p` for reference plans, `pair_count` for target plans.
    pub fn per_point_count(&self) -> usize {
        self.per_point
    }

    pub fn kind(&self) -> PlanKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_member(&self, point: usize, model: usize) -> bool {
        self.membership[point * self.n_models + model]
    }

    /// Membership of `point` across all models.
    pub fn row(&self, point: usize) -> &[bool] {
        &self.membership[point * self.n_models..(point + 1) * self.n_models]
    }

    pub fn column_size(&self, model: usize) -> usize {
        (0..self.n_points).filter(|&i| self.is_member(i, model)).count()
    }

    /// Ascending indices of the points that train `model`.
    pub fn training_indices(&self, model: usize) -> Result<Vec<usize>> {
        if model >= self.n_models {
            return Err(Error::invalid(format!(
                "model index {model} out of range for {} models",
                self.n_models
            )));
        }
        Ok((0..self.n_points).filter(|&i| self.is_member(i, model)).collect())
    }

    /// Checks the kind-specific invariants.
    pub fn validate(&self) -> Result<()> {
        if self.membership.len() != self.n_points * self.n_models {
            return Err(Error::Corrupt("membership size does not match n x k".into()));
        }
        if self.per_point < 1 || self.per_point > self.n_models {
            return Err(Error::Corrupt(format!(
                "per-point count {} outside [1, {}]",
                self.per_point, self.n_models
            )));
        }
        for i in 0..self.n_points {
            let count = self.row(i).iter().filter(|&&b| b).count();
            if count != self.per_point {
                return Err(Error::Corrupt(format!(
                    "point {i} is in {count} models, expected {}",
                    self.per_point
                )));
            }
        }
        if self.kind == PlanKind::Target {
            if !self.n_models.is_multiple_of(2) || self.per_point * 2 != self.n_models {
                return Err(Error::Corrupt("target plan must have 2 * pair_count models".into()));
            }
            for i in 0..self.n_points {
                let row = self.row(i);
                if let Some(j) = (0..self.n_models / 2).find(|&j| row[2 * j] == row[2 * j + 1]) {
                    return Err(Error::Corrupt(format!("pair {j} does not partition point {i}")));
                }
            }
        }
        Ok(())
    }

    /// Header line `{n, k, p, kind, seed}`, then the packed bitmap.
    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        serde_json::to_writer(&mut *out, &self.header())?;
        out.write_all(b"\n")?;
        out.write_all(&self.packed_bits())?;
        Ok(())
    }

    pub fn read_from(input: &mut impl BufRead) -> Result<Self> {
        let mut line = String::new();
        input.read_line(&mut line)?;
        let header: PlanHeader =
            serde_json::from_str(line.trim_end()).map_err(|e| Error::Corrupt(format!("plan header: {e}")))?;
        let mut payload = Vec::new();
        input.read_to_end(&mut payload)?;
        Self::from_packed(header, &payload)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub(crate) fn header(&self) -> PlanHeader {
        PlanHeader {
            n: self.n_points,
            k: self.n_models,
            p: self.per_point,
            kind: self.kind,
            seed: self.seed,
        }
    }

    /// Row-major bitmap, 8 cells per byte, cell `c` at bit `c % 8` of byte `c / 8`.
    pub(crate) fn packed_bits(&self) -> Vec<u8> {
        let mut bytes = vec![0u8; self.membership.len().div_ceil(8)];
        for (c, _) in self.membership.iter().enumerate().filter(|(_, &b)| b) {
            bytes[c / 8] |= 1 << (c % 8);
        }
        bytes
    }

    pub(crate) fn from_packed(header: PlanHeader, payload: &[u8]) -> Result<Self> {
        let cells = header
            .n
            .checked_mul(header.k)
            .ok_or_else(|| Error::Corrupt("plan dimensions overflow".into()))?;
        let expected = cells.div_ceil(8);
        if payload.len() < expected {
            return Err(Error::Truncated {
                expected,
                actual: payload.len(),
            });
        }
        if payload.len() > expected {
            return Err(Error::Corrupt(format!(
                "plan bitmap has {} bytes, header implies {expected}",
                payload.len()
            )));
        }
        let membership = (0..cells).map(|c| payload[c / 8] >> (c % 8) & 1 == 1).collect();
        let plan = Self {
            n_points: header.n,
            n_models: header.k,
            per_point: header.p,
            kind: header.kind,
            seed: header.seed,
            membership,
        };
        plan.validate()?;
        Ok(plan)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub(crate) struct PlanHeader {
    pub n: usize,
    pub k: usize,
    pub p: usize,
    pub kind: PlanKind,
    pub seed: u64,
}

/// Puts each of `n` points into `p` of `k` models chosen uniformly without
/// replacement. Point `i` draws from its own stream keyed by `(seed, i)`.
pub fn allocate_reference(n: usize, k: usize, p: usize, seed: u64) -> Result<AllocationPlan> {
    if n < 1 {
        return Err(Error::invalid("reference plan needs at least one point"));
    }
    if p < 1 || p > k {
        return Err(Error::invalid(format!("need 1 <= p <= k, got p = {p}, k = {k}")));
    }
    let mut membership = vec![false; n * k];
    membership.par_chunks_mut(k).enumerate().for_each(|(i, row)| {
        let mut rng = seed::stream_rng(seed, i as u64);
        for j in index::sample(&mut rng, k, p) {
            row[j] = true;
        }
    });
    Ok(AllocationPlan {
        n_points: n,
        n_models: k,
        per_point: p,
        kind: PlanKind::Reference,
        seed,
        membership,
    })
}

/// `2 * pair_count` target models; pair `j` splits a seeded permutation of the
/// points into halves, the first half training model `2j`.
pub fn allocate_target_halves(n: usize, pair_count: usize, seed: u64) -> Result<AllocationPlan> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::invalid(format!("target split needs an even, positive n, got {n}")));
    }
    if pair_count < 1 {
        return Err(Error::invalid("pair_count must be at least 1"));
    }
    let k = 2 * pair_count;
    let columns: Vec<Vec<usize>> = (0..pair_count)
        .into_par_iter()
        .map(|j| {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut seed::stream_rng(seed, j as u64));
            perm.truncate(n / 2);
            perm
        })
        .collect();
    let mut membership = vec![false; n * k];
    for (j, first_half) in columns.iter().enumerate() {
        for i in 0..n {
            membership[i * k + 2 * j + 1] = true;
        }
        for &i in first_half {
            membership[i * k + 2 * j] = true;
            membership[i * k + 2 * j + 1] = false;
        }
    }
    Ok(AllocationPlan {
        n_points: n,
        n_models: k,
        per_point: pair_count,
        kind: PlanKind::Target,
        seed,
        membership,
    })
}

/// Free-function form of [`AllocationPlan::training_indices`].
pub fn training_indices(plan: &AllocationPlan, model: usize) -> Result<Vec<usize>> {
    plan.training_indices(model)
}
