//! Per-sensor random projections and the push-forward of the uncompressed
//! moments through the block-diagonal operator `A = diag(A_1, ..., A_L)`.
//!
//! Each `A_j` is filled row-major from its own seeded stream, so a draw with
//! `M` rows is the leading `M`-row submatrix of any draw with more rows from
//! the same seed. Compression-ratio sweeps therefore use nested projections.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::StandardNormal;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::MomentModel;
use crate::multimodal_gen::{Hypothesis, SampleBlock};
use crate::rng::{mix_seed, rng_from_seed, SeedDomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionKind {
    /// iid zero-mean Gaussian entries.
    Gaussian,
    /// `A_j = I` (requires `M = N`).
    Identity,
}

/// Everything needed to rebuild a [`ProjectionSet`]; this is what gets persisted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionDescriptor {
    pub kind: ProjectionKind,
    pub m: usize,
    pub n: usize,
    pub sensors: usize,
    pub seed: u64,
    pub entry_std: f64,
}

impl ProjectionDescriptor {
    pub fn build(&self) -> Result<ProjectionSet> {
        match self.kind {
            ProjectionKind::Gaussian => {
                draw_projection_scaled(self.m, self.n, self.sensors, self.seed, self.entry_std)
            }
            ProjectionKind::Identity => {
                if self.m != self.n {
                    return Err(Error::InvalidParameter("identity projection needs M = N".into()));
                }
                ProjectionSet::identity(self.n, self.sensors)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProjectionSet {
    blocks: Vec<DMatrix<f64>>,
    descriptor: ProjectionDescriptor,
}

pub fn draw_projection(m: usize, n: usize, sensors: usize, seed: u64) -> Result<ProjectionSet> {
    draw_projection_scaled(m, n, sensors, seed, 1.0)
}

/// Gaussian projection with entries `N(0, entry_std²)`.
pub fn draw_projection_scaled(
    m: usize,
    n: usize,
    sensors: usize,
    seed: u64,
    entry_std: f64,
) -> Result<ProjectionSet> {
    if m == 0 || m > n {
        return Err(Error::InvalidParameter(format!("need 1 <= M <= N, got M = {m}, N = {n}")));
    }
    if sensors == 0 {
        return Err(Error::InvalidParameter("need at least one sensor".into()));
    }
    if !(entry_std.is_finite() && entry_std != 0.0) {
        return Err(Error::InvalidParameter(format!("entry scale {entry_std}")));
    }
    let blocks = (0..sensors)
        .map(|j| {
            let mut rng = rng_from_seed(mix_seed(seed, &[SeedDomain::Projection.tag(), j as u64]));
            DMatrix::from_row_iterator(
                m,
                n,
                (0..m * n).map(|_| entry_std * rng.sample::<f64, _>(StandardNormal)),
            )
        })
        .collect();
    Ok(ProjectionSet {
        blocks,
        descriptor: ProjectionDescriptor {
            kind: ProjectionKind::Gaussian,
            m,
            n,
            sensors,
            seed,
            entry_std,
        },
    })
}

impl ProjectionSet {
    pub fn identity(n: usize, sensors: usize) -> Result<Self> {
        if n == 0 || sensors == 0 {
            return Err(Error::InvalidParameter("identity projection needs N, L >= 1".into()));
        }
        Ok(Self {
            blocks: vec![DMatrix::identity(n, n); sensors],
            descriptor: ProjectionDescriptor {
                kind: ProjectionKind::Identity,
                m: n,
                n,
                sensors,
                seed: 0,
                entry_std: 1.0,
            },
        })
    }

    /// Arbitrary explicit blocks; all must share one `M x N` shape.
    pub fn from_blocks(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let (m, n) = blocks
            .first()
            .map(|b| b.shape())
            .ok_or_else(|| Error::InvalidParameter("no projection blocks".into()))?;
        if m == 0 || m > n || blocks.iter().any(|b| b.shape() != (m, n)) {
            return Err(Error::DimensionMismatch("blocks must share an M x N shape with M <= N".into()));
        }
        let sensors = blocks.len();
        Ok(Self {
            blocks,
            descriptor: ProjectionDescriptor {
                kind: ProjectionKind::Gaussian,
                m,
                n,
                sensors,
                seed: 0,
                entry_std: 1.0,
            },
        })
    }

    pub fn descriptor(&self) -> &ProjectionDescriptor {
        &self.descriptor
    }

    pub fn m(&self) -> usize {
        self.descriptor.m
    }

    pub fn n(&self) -> usize {
        self.descriptor.n
    }

    pub fn sensors(&self) -> usize {
        self.descriptor.sensors
    }

    pub fn block(&self, sensor: usize) -> &DMatrix<f64> {
        &self.blocks[sensor]
    }

    /// Multiply every block by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for b in &mut out.blocks {
            *b *= c;
        }
        out.descriptor.entry_std *= c;
        out
    }

    /// Keep only the leading `m` rows of every block.
    pub fn truncate_rows(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.m() {
            return Err(Error::InvalidParameter(format!("cannot truncate {} rows to {m}", self.m())));
        }
        let mut out = self.clone();
        out.blocks = self.blocks.iter().map(|b| b.rows(0, m).into_owned()).collect();
        out.descriptor.m = m;
        Ok(out)
    }

    /// Dense `ML x NL` block-diagonal operator.
    pub fn assembled(&self) -> DMatrix<f64> {
        let (m, n, l) = (self.m(), self.n(), self.sensors());
        let mut a = DMatrix::zeros(m * l, n * l);
        for (j, b) in self.blocks.iter().enumerate() {
            a.view_mut((j * m, j * n), (m, n)).copy_from(b);
        }
        a
    }

    /// `y = [A_1 x_1; ...; A_L x_L]`.
    pub fn compress(&self, x: &SampleBlock) -> Result<DVector<f64>> {
        if x.modalities() != self.sensors() || x.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "sample block is {}x{}, projection expects {}x{}",
                x.modalities(),
                x.len(),
                self.sensors(),
                self.n()
            )));
        }
        let m = self.m();
        let mut y = DVector::zeros(m * self.sensors());
        for (j, a) in self.blocks.iter().enumerate() {
            let xj = DVector::from_column_slice(x.row(j));
            y.rows_mut(j * m, m).copy_from(&(a * xj));
        }
        Ok(y)
    }
}

pub fn compress(proj: &ProjectionSet, x: &SampleBlock) -> Result<DVector<f64>> {
    proj.compress(x)
}

/// Gaussian description of the compressed vector under both hypotheses,
/// with cached Cholesky factors.
#[derive(Debug, Clone)]
pub struct CompressedMoments {
    mean: [DVector<f64>; 2],
    cov: [DMatrix<f64>; 2],
    chol: [Cholesky<f64, Dyn>; 2],
    log_det: [f64; 2],
}

impl CompressedMoments {
    /// Build from explicit means and covariances (symmetrized before factoring).
    pub fn from_parts(mean: [DVector<f64>; 2], cov: [DMatrix<f64>; 2]) -> Result<Self> {
        let dim = mean[0].len();
        if mean[1].len() != dim || cov.iter().any(|c| c.shape() != (dim, dim)) || dim == 0 {
            return Err(Error::DimensionMismatch("compressed mean/covariance shapes disagree".into()));
        }
        let cov = cov.map(|c| {
            let t = c.transpose();
            (c + t) * 0.5
        });
        let factor = |h: u8| -> Result<Cholesky<f64, Dyn>> {
            let c = &cov[h as usize];
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Factorization { hypothesis: h });
            }
            Cholesky::new(c.clone()).ok_or(Error::Factorization { hypothesis: h })
        };
        let chol = [factor(0)?, factor(1)?];
        let log_det = [0, 1].map(|h: usize| 2.0 * chol[h].l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>());
        for (h, ld) in log_det.iter().enumerate() {
            if !ld.is_finite() {
                return Err(Error::Factorization { hypothesis: h as u8 });
            }
        }
        Ok(Self { mean, cov, chol, log_det })
    }

    pub fn dim(&self) -> usize {
        self.mean[0].len()
    }

    pub fn mean(&self, h: Hypothesis) -> &DVector<f64> {
        &self.mean[h.index()]
    }

    pub fn cov(&self, h: Hypothesis) -> &DMatrix<f64> {
        &self.cov[h.index()]
    }

    pub fn cholesky(&self, h: Hypothesis) -> &Cholesky<f64, Dyn> {
        &self.chol[h.index()]
    }

    pub fn log_det(&self, h: Hypothesis) -> f64 {
        self.log_det[h.index()]
    }

    /// `L_h^{-1} v` for the lower Cholesky factor `L_h` of `C_h`.
    pub fn whiten(&self, h: Hypothesis, v: &DVector<f64>) -> DVector<f64> {
        self.chol[h.index()]
            .l_dirty()
            .solve_lower_triangular(v)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// Mahalanobis form `(y − μ_h)ᵀ C_h⁻¹ (y − μ_h)`.
    pub fn mahalanobis(&self, h: Hypothesis, y: &DVector<f64>) -> f64 {
        self.whiten(h, &(y - &self.mean[h.index()])).norm_squared()
    }
}

/// `μ^i_j = A_j β^i_j` and `C^i_{jk} = A_j D^i_{jk} A_kᵀ`.
pub fn push_moments(model: &MomentModel, proj: &ProjectionSet) -> Result<CompressedMoments> {
    let (l, n, m) = (model.modalities(), model.n(), proj.m());
    if proj.sensors() != l || proj.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "moment model is {l}x{n}, projection is {}x{}",
            proj.sensors(),
            proj.n()
        )));
    }
    let mut means = Vec::with_capacity(2);
    let mut covs = Vec::with_capacity(2);
    for h in Hypothesis::BOTH {
        let mut mu = DVector::zeros(m * l);
        for j in 0..l {
            let beta = DVector::from_column_slice(model.mean(h, j));
            mu.rows_mut(j * m, m).copy_from(&(proj.block(j) * beta));
        }
        let mut c = DMatrix::zeros(m * l, m * l);
        for j in 0..l {
            for k in j..l {
                let d = model.cov_block(h, j, k);
                if d.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let mut scaled = proj.block(j).clone();
                for (col, &dv) in scaled.column_iter_mut().zip(d) {
                    let mut col = col;
                    col *= dv;
                }
                let block = scaled * proj.block(k).transpose();
                c.view_mut((j * m, k * m), (m, m)).copy_from(&block);
                if k != j {
                    c.view_mut((k * m, j * m), (m, m)).copy_from(&block.transpose());
                }
            }
        }
        means.push(mu);
        covs.push(c);
    }
    let c1 = covs.pop().unwrap();
    let c0 = covs.pop().unwrap();
    let mu1 = means.pop().unwrap();
    let mu0 = means.pop().unwrap();
    CompressedMoments::from_parts([mu0, mu1], [c0, c1])
}
