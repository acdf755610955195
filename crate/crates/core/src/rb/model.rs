use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::assembly::{assemble_trilinear, AffineOperator, Mu, Slot, Theta};
use crate::error::{Error, Result};
use crate::fespace::FeFunction;
use crate::hifi::{Equation, FullOrderModel, NonlinearForm, ProblemConfig, SystemBlocks};
use crate::linalg::dense::{modified_gram_schmidt, orthonormalize_against};
use crate::linalg::{dot, CsrMatrix};

/// Online variant: (i) stabilized with supremizers, (ii) stabilized without,
/// (iii) supremizers without online stabilization, (iv) neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RbOption {
    I,
    II,
    III,
    IV,
}

impl RbOption {
    pub const ALL: [RbOption; 4] = [RbOption::I, RbOption::II, RbOption::III, RbOption::IV];

    pub fn name(self) -> &'static str {
        match self {
            RbOption::I => "i",
            RbOption::II => "ii",
            RbOption::III => "iii",
            RbOption::IV => "iv",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(RbOption::I),
            "ii" | "2" => Ok(RbOption::II),
            "iii" | "3" => Ok(RbOption::III),
            "iv" | "4" => Ok(RbOption::IV),
            other => Err(Error::InvalidArgument(format!("unknown option `{other}`, expected i, ii, iii or iv"))),
        }
    }

    pub fn with_supremizers(self) -> bool {
        matches!(self, RbOption::I | RbOption::III)
    }

    pub fn online_stabilization(self) -> bool {
        matches!(self, RbOption::I | RbOption::II)
    }

    pub fn enriched(self) -> Self {
        match self {
            RbOption::II => RbOption::I,
            RbOption::IV => RbOption::III,
            o => o,
        }
    }

    pub fn stripped(self) -> Self {
        match self {
            RbOption::I => RbOption::II,
            RbOption::III => RbOption::IV,
            o => o,
        }
    }
}

impl std::fmt::Display for RbOption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One greedy snapshot: homogeneous velocity, pressure and its supremizer.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub mu: Mu,
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
    pub supremizer: Vec<f64>,
}

pub type AffineDense = Vec<(Theta, DMatrix<f64>)>;

/// Projected trilinear form: `slices[j][(i, k)] = t(ẑ_j, ẑ_k, test_i)`.
#[derive(Debug, Clone)]
pub struct ReducedTensor {
    pub equation: Equation,
    pub terms: Vec<(Theta, Vec<DMatrix<f64>>)>,
}

/// Projected system blocks. Velocity trial columns are `[lifting, Z_u, Z_s]`,
/// velocity test rows `[Z_u, Z_s]`.
#[derive(Debug, Clone, Default)]
pub struct ReducedBlocks {
    pub uu: AffineDense,
    pub up: AffineDense,
    pub pu: AffineDense,
    pub pp: AffineDense,
    pub nonlinear: Vec<ReducedTensor>,
}

#[derive(Debug, Clone)]
pub struct ReducedBases {
    pub lifting: Vec<f64>,
    pub velocity: Vec<Vec<f64>>,
    pub supremizer: Vec<Vec<f64>>,
    pub pressure: Vec<Vec<f64>>,
    /// Number of pressure dofs of the full-order space.
    pub pressure_len: usize,
    /// Snapshots discarded as linearly dependent, per block.
    pub dropped: [usize; 3],
}

impl ReducedBases {
    /// Orthonormal bases from the given snapshots: velocity and supremizers
    /// in `X_u` (supremizers against velocity first), pressure in `X_p`.
    pub fn from_snapshots(fom: &FullOrderModel, snapshots: &[Snapshot]) -> Self {
        let vel: Vec<Vec<f64>> = snapshots.iter().map(|s| s.velocity.clone()).collect();
        let sup: Vec<Vec<f64>> = snapshots.iter().map(|s| s.supremizer.clone()).collect();
        let pres: Vec<Vec<f64>> = snapshots.iter().map(|s| s.pressure.clone()).collect();
        let zu = modified_gram_schmidt(&vel, &fom.xu);
        let zs = orthonormalize_against(&zu.basis, &sup, &fom.xu);
        let zp = modified_gram_schmidt(&pres, &fom.xp);
        Self {
            lifting: fom.lifting.coefficients.clone(),
            pressure_len: fom.n_pressure(),
            dropped: [zu.dropped.len(), zs.dropped.len(), zp.dropped.len()],
            velocity: zu.basis,
            supremizer: zs.basis,
            pressure: zp.basis,
        }
    }

    pub fn n_u(&self) -> usize {
        self.velocity.len()
    }

    pub fn n_s(&self) -> usize {
        self.supremizer.len()
    }

    pub fn n_p(&self) -> usize {
        self.pressure.len()
    }

    /// Velocity trial vectors `[lifting, Z_u, Z_s]`.
    pub fn trial(&self) -> Vec<&[f64]> {
        std::iter::once(self.lifting.as_slice())
            .chain(self.velocity.iter().map(Vec::as_slice))
            .chain(self.supremizer.iter().map(Vec::as_slice))
            .collect()
    }

    /// Velocity test vectors `[Z_u, Z_s]`.
    pub fn test(&self) -> Vec<&[f64]> {
        self.velocity.iter().chain(self.supremizer.iter()).map(Vec::as_slice).collect()
    }

    pub fn pressure_vectors(&self) -> Vec<&[f64]> {
        self.pressure.iter().map(Vec::as_slice).collect()
    }
}

/// Index sets of the velocity trial (lifting column included) and test
/// functions used by an option.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct View {
    pub trial: Vec<usize>,
    pub test: Vec<usize>,
}

/// Offline product of the reduced-basis method.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub config: ProblemConfig,
    pub option: RbOption,
    pub seed: u64,
    /// Parameters of the snapshots, in greedy order.
    pub parameters: Vec<Mu>,
    pub bases: ReducedBases,
    pub plain: ReducedBlocks,
    pub stabilization: ReducedBlocks,
    /// Gram matrix of `[Z_u, Z_s]` in `X_u`.
    pub xu: DMatrix<f64>,
    /// Gram matrix of `Z_p` in `X_p`.
    pub xp: DMatrix<f64>,
}

/// `Zᵀ M Ẑ` for a sparse `M`.
pub fn project(m: &CsrMatrix, test: &[&[f64]], trial: &[&[f64]]) -> DMatrix<f64> {
    let cols: Vec<Vec<f64>> = trial.par_iter().map(|z| m.matvec(z)).collect();
    DMatrix::from_fn(test.len(), trial.len(), |i, k| dot(test[i], &cols[k]))
}

fn project_affine(op: &AffineOperator, test: &[&[f64]], trial: &[&[f64]]) -> AffineDense {
    op.terms.iter().map(|t| (t.theta, project(&t.value, test, trial))).collect()
}

fn project_nonlinear(
    fom: &FullOrderModel,
    form: &NonlinearForm,
    test: &[&[f64]],
    trial: &[&[f64]],
) -> Result<ReducedTensor> {
    let test_space = match form.equation {
        Equation::Momentum => &*fom.velocity,
        Equation::Mass => &*fom.pressure,
    };
    // slices[j][q]
    let slices: Vec<Vec<DMatrix<f64>>> = trial
        .par_iter()
        .map(|zj| {
            let w = FeFunction::new(fom.velocity.clone(), zj.to_vec())?;
            form.terms
                .iter()
                .map(|(_, products)| {
                    let m = assemble_trilinear(test_space, &fom.velocity, products, form.weight, &w, Slot::Transported)?;
                    Ok(project(&m, test, trial))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let terms = form
        .terms
        .iter()
        .enumerate()
        .map(|(q, (theta, _))| (*theta, slices.iter().map(|s| s[q].clone()).collect()))
        .collect();
    Ok(ReducedTensor { equation: form.equation, terms })
}

fn project_blocks(fom: &FullOrderModel, blocks: &SystemBlocks, bases: &ReducedBases) -> Result<ReducedBlocks> {
    let trial = bases.trial();
    let test = bases.test();
    let pres = bases.pressure_vectors();
    let mut nonlinear = Vec::new();
    for form in &blocks.nonlinear {
        let t = match form.equation {
            Equation::Momentum => &test,
            Equation::Mass => &pres,
        };
        nonlinear.push(project_nonlinear(fom, form, t, &trial)?);
    }
    Ok(ReducedBlocks {
        uu: project_affine(&blocks.uu, &test, &trial),
        up: project_affine(&blocks.up, &test, &pres),
        pu: project_affine(&blocks.pu, &pres, &trial),
        pp: project_affine(&blocks.pp, &pres, &pres),
        nonlinear,
    })
}

impl ReducedModel {
    /// Projects the full-order operators onto the bases built from `snapshots`.
    pub fn build(fom: &FullOrderModel, snapshots: &[Snapshot], option: RbOption, seed: u64) -> Result<Self> {
        let bases = ReducedBases::from_snapshots(fom, snapshots);
        let plain = project_blocks(fom, &fom.plain, &bases)?;
        let stabilization = project_blocks(fom, &fom.stabilization, &bases)?;
        let test = bases.test();
        let pres = bases.pressure_vectors();
        let xu = project(&fom.xu, &test, &test);
        let xp = project(&fom.xp, &pres, &pres);
        Ok(Self {
            config: fom.config.clone(),
            option,
            seed,
            parameters: snapshots.iter().map(|s| s.mu).collect(),
            bases,
            plain,
            stabilization,
            xu,
            xp,
        })
    }

    pub fn n(&self) -> usize {
        self.parameters.len()
    }

    pub fn n_u(&self) -> usize {
        self.bases.n_u()
    }

    pub fn n_s(&self) -> usize {
        if self.option.with_supremizers() {
            self.bases.n_s()
        } else {
            0
        }
    }

    pub fn n_p(&self) -> usize {
        self.bases.n_p()
    }

    pub fn with_option(&self, option: RbOption) -> Self {
        Self { option, ..self.clone() }
    }

    /// Same model without the supremizer directions.
    pub fn strip_supremizers(&self) -> Self {
        self.with_option(self.option.stripped())
    }

    pub fn enrich_supremizers(&self) -> Self {
        self.with_option(self.option.enriched())
    }

    pub fn view(&self, option: RbOption) -> View {
        let (nu, ns) = (self.bases.n_u(), self.bases.n_s());
        let mut trial: Vec<usize> = (0..=nu).collect();
        let mut test: Vec<usize> = (0..nu).collect();
        if option.with_supremizers() {
            trial.extend(nu + 1..=nu + ns);
            test.extend(nu..nu + ns);
        }
        View { trial, test }
    }

    /// Stabilization is present offline and kept online by this option.
    pub fn uses_stabilization(&self, option: RbOption) -> bool {
        option.online_stabilization() && self.config.stabilization.is_active() && self.config.stabilization.apply_online
    }

    pub fn parts(&self, option: RbOption) -> Vec<&ReducedBlocks> {
        if self.uses_stabilization(option) {
            vec![&self.plain, &self.stabilization]
        } else {
            vec![&self.plain]
        }
    }

    /// Total velocity and pressure for reduced coefficients in the view of `option`;
    /// `lid` multiplies the lifting.
    pub fn reconstruct(&self, option: RbOption, lid: f64, velocity: &[f64], pressure: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let view = self.view(option);
        let trial = self.bases.trial();
        let mut u: Vec<f64> = self.bases.lifting.iter().map(|l| lid * l).collect();
        for (c, &k) in velocity.iter().zip(&view.trial[1..]) {
            crate::linalg::axpy(*c, trial[k], &mut u);
        }
        let mut p = vec![0.0; self.bases.pressure_len];
        for (c, z) in pressure.iter().zip(&self.bases.pressure) {
            crate::linalg::axpy(*c, z, &mut p);
        }
        (u, p)
    }
}
