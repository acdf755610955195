/// Parameter point `(μ₁, μ₂)`: physical parameter and cavity length parameter.
pub type Mu = [f64; 2];

/// How the physical parameter `μ₁` sets the viscosity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViscosityRule {
    /// `ν = μ₁`.
    Viscosity,
    /// `ν = L·|ū| / μ₁` with unit length and velocity scales.
    Reynolds,
}

/// Affine map from the reference cavity `(0, 1+μ̄₂)×(0,1)` onto
/// `(0, 1+μ₂)×(0,1)`, stretching only the horizontal direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryMap {
    pub mu2_ref: f64,
    pub viscosity: ViscosityRule,
}

impl GeometryMap {
    pub fn new(mu2_ref: f64, viscosity: ViscosityRule) -> Self {
        Self { mu2_ref, viscosity }
    }

    pub fn reference_length(&self) -> f64 {
        1.0 + self.mu2_ref
    }

    /// Horizontal stretch `a(μ₂)`.
    pub fn scale(&self, mu2: f64) -> f64 {
        (1.0 + mu2) / (1.0 + self.mu2_ref)
    }

    pub fn nu(&self, mu: Mu) -> f64 {
        match self.viscosity {
            ViscosityRule::Viscosity => mu[0],
            ViscosityRule::Reynolds => 1.0 / mu[0],
        }
    }

    pub fn jacobian(&self, mu: Mu) -> [[f64; 2]; 2] {
        [[self.scale(mu[1]), 0.0], [0.0, 1.0]]
    }

    pub fn jacobian_det(&self, mu: Mu) -> f64 {
        self.scale(mu[1])
    }

    /// Viscous tensor `ν |J| J⁻¹ J⁻ᵀ`.
    pub fn kappa(&self, mu: Mu) -> [[f64; 2]; 2] {
        let a = self.scale(mu[1]);
        let nu = self.nu(mu);
        [[nu / a, 0.0], [0.0, nu * a]]
    }

    /// Divergence tensor `|J| J⁻¹`.
    pub fn chi(&self, mu: Mu) -> [[f64; 2]; 2] {
        [[1.0, 0.0], [0.0, self.scale(mu[1])]]
    }

    /// Maps a reference point to the physical domain.
    pub fn to_physical(&self, mu: Mu, p: [f64; 2]) -> [f64; 2] {
        [self.scale(mu[1]) * p[0], p[1]]
    }
}

/// Parameter-dependent coefficient `coeff · ν(μ)^nu_pow · a(μ₂)^a_pow`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theta {
    pub coeff: f64,
    pub nu_pow: i32,
    pub a_pow: i32,
}

impl Theta {
    pub const ONE: Theta = Theta { coeff: 1.0, nu_pow: 0, a_pow: 0 };

    pub fn new(coeff: f64, nu_pow: i32, a_pow: i32) -> Self {
        Self { coeff, nu_pow, a_pow }
    }

    pub fn eval(&self, geo: &GeometryMap, mu: Mu) -> f64 {
        self.coeff * geo.nu(mu).powi(self.nu_pow) * geo.scale(mu[1]).powi(self.a_pow)
    }

    pub fn scaled(self, s: f64) -> Self {
        Self { coeff: self.coeff * s, ..self }
    }
}
