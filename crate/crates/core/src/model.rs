//! Plant, steady-state Kalman estimator and output-feedback controller.
//!
//! ```text
//! x_{k+1} = F x_k + G u_k + v_k        v_k ~ N(0, R1)
//! y_k     = C x_k + η_k                η_k ~ N(0, R2)
//! ȳ_k     = y_k + δ_k                  (sensor attack)
//! r_k     = ȳ_k - C x̂_k
//! x̂_{k+1} = F x̂_k + G u_k + L r_k,     u_k = K x̂_k
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::linalg::ensure_finite;
use crate::numerics::{
    psd_sqrt, sampling_factor, solve_dare, solve_lyapunov, spectral_radius, Matrix, SymmetricPsd,
    Vector,
};

/// Discrete LTI plant with Gaussian process and measurement noise.
#[derive(Debug, Clone)]
pub struct PlantModel {
    f: Matrix,
    g: Matrix,
    c: Matrix,
    r1: SymmetricPsd,
    r2: SymmetricPsd,
}

impl PlantModel {
    pub fn new(f: Matrix, g: Matrix, c: Matrix, r1: Matrix, r2: Matrix) -> Result<Self> {
        for (m, what) in [(&f, "F"), (&g, "G"), (&c, "C"), (&r1, "R1"), (&r2, "R2")] {
            ensure_finite(m, what)?;
        }
        let n = f.nrows();
        if n == 0 || !f.is_square() {
            return Err(Error::dim(
                "F",
                "nonempty square",
                format!("{}x{}", f.nrows(), f.ncols()),
            ));
        }
        if g.nrows() != n || g.ncols() == 0 {
            return Err(Error::dim(
                "G",
                format!("{n}xm"),
                format!("{}x{}", g.nrows(), g.ncols()),
            ));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::dim(
                "C",
                format!("px{n}"),
                format!("{}x{}", c.nrows(), c.ncols()),
            ));
        }
        let p = c.nrows();
        if r1.shape() != (n, n) {
            return Err(Error::dim(
                "R1",
                format!("{n}x{n}"),
                format!("{}x{}", r1.nrows(), r1.ncols()),
            ));
        }
        if r2.shape() != (p, p) {
            return Err(Error::dim(
                "R2",
                format!("{p}x{p}"),
                format!("{}x{}", r2.nrows(), r2.ncols()),
            ));
        }
        let r1 = SymmetricPsd::new(r1).map_err(|e| Error::InvalidMatrix(format!("R1: {e}")))?;
        let r2 = SymmetricPsd::new(r2).map_err(|e| Error::InvalidMatrix(format!("R2: {e}")))?;
        if r2.min_eigenvalue() <= 0.0 {
            return Err(Error::InvalidMatrix("R2 must be positive definite".into()));
        }
        Ok(PlantModel { f, g, c, r1, r2 })
    }

    pub fn n(&self) -> usize {
        self.f.nrows()
    }
    pub fn m(&self) -> usize {
        self.g.ncols()
    }
    pub fn p(&self) -> usize {
        self.c.nrows()
    }
    pub fn f(&self) -> &Matrix {
        &self.f
    }
    pub fn g(&self) -> &Matrix {
        &self.g
    }
    pub fn c(&self) -> &Matrix {
        &self.c
    }
    pub fn r1(&self) -> &SymmetricPsd {
        &self.r1
    }
    pub fn r2(&self) -> &SymmetricPsd {
        &self.r2
    }
}

/// Where the estimator gain came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainSource {
    /// Steady-state Kalman gain from the Riccati equation.
    Riccati,
    /// Supplied by the caller; `P` solves the attack-free error Lyapunov equation.
    Supplied,
}

/// Spectral radii verified when the loop was assembled.
#[derive(Debug, Clone, Copy)]
pub struct StabilityCertificate {
    /// ρ[F]
    pub open_loop: f64,
    /// ρ[F + GK]
    pub closed_loop: f64,
    /// ρ[F - LC]
    pub estimator: f64,
}

/// Plant plus feedback and estimator gains and the derived residual statistics.
///
/// Immutable once built.
#[derive(Debug, Clone)]
pub struct ClosedLoopModel {
    plant: PlantModel,
    k: Matrix,
    l: Matrix,
    p_cov: SymmetricPsd,
    sigma: SymmetricPsd,
    sigma_half: Matrix,
    sigma_inv_half: Matrix,
    gain_source: GainSource,
    certificate: StabilityCertificate,
}

impl ClosedLoopModel {
    /// Assembles the loop. Without `l` the Kalman gain is computed from the
    /// Riccati equation; with `l` the error covariance comes from
    /// `P = (F-LC) P (F-LC)ᵀ + L R2 Lᵀ + R1`. Either way `Σ = C P Cᵀ + R2`.
    pub fn build(plant: PlantModel, k: Matrix, l: Option<Matrix>) -> Result<Self> {
        let (n, m, p) = (plant.n(), plant.m(), plant.p());
        ensure_finite(&k, "K")?;
        if k.shape() != (m, n) {
            return Err(Error::dim(
                "K",
                format!("{m}x{n}"),
                format!("{}x{}", k.nrows(), k.ncols()),
            ));
        }
        let closed_loop = spectral_radius(&(plant.f() + plant.g() * &k))?;
        if closed_loop >= 1.0 {
            return Err(Error::UnstableClosedLoop { rho: closed_loop });
        }

        let (l, p_cov, gain_source) = match l {
            None => {
                let sol = solve_dare(plant.f(), plant.c(), plant.r1(), plant.r2())?;
                (sol.gain, sol.p, GainSource::Riccati)
            }
            Some(l) => {
                ensure_finite(&l, "L")?;
                if l.shape() != (n, p) {
                    return Err(Error::dim(
                        "L",
                        format!("{n}x{p}"),
                        format!("{}x{}", l.nrows(), l.ncols()),
                    ));
                }
                let a = plant.f() - &l * plant.c();
                let rho = spectral_radius(&a)?;
                if rho >= 1.0 {
                    return Err(Error::UnstableEstimator { rho });
                }
                let q = &l * plant.r2().matrix() * l.transpose() + plant.r1().matrix();
                let p_cov = SymmetricPsd::new(solve_lyapunov(&a, &q)?)?;
                (l, p_cov, GainSource::Supplied)
            }
        };

        let estimator = spectral_radius(&(plant.f() - &l * plant.c()))?;
        if estimator >= 1.0 {
            return Err(Error::UnstableEstimator { rho: estimator });
        }
        let open_loop = spectral_radius(plant.f())?;

        let sigma = SymmetricPsd::new(
            plant.c() * p_cov.matrix() * plant.c().transpose() + plant.r2().matrix(),
        )?;
        let sigma_half = psd_sqrt(&sigma);
        let sigma_inv_half = sigma_half
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidMatrix("residual covariance is singular".into()))?;

        Ok(ClosedLoopModel {
            plant,
            k,
            l,
            p_cov,
            sigma,
            sigma_half,
            sigma_inv_half,
            gain_source,
            certificate: StabilityCertificate {
                open_loop,
                closed_loop,
                estimator,
            },
        })
    }

    pub fn plant(&self) -> &PlantModel {
        &self.plant
    }
    pub fn k(&self) -> &Matrix {
        &self.k
    }
    pub fn l(&self) -> &Matrix {
        &self.l
    }
    /// Steady-state estimation error covariance.
    pub fn p_cov(&self) -> &SymmetricPsd {
        &self.p_cov
    }
    /// Residual covariance Σ.
    pub fn sigma(&self) -> &SymmetricPsd {
        &self.sigma
    }
    /// Symmetric square root Σ^{1/2}.
    pub fn sigma_half(&self) -> &Matrix {
        &self.sigma_half
    }
    pub fn gain_source(&self) -> GainSource {
        self.gain_source
    }
    pub fn certificate(&self) -> StabilityCertificate {
        self.certificate
    }
    pub fn n(&self) -> usize {
        self.plant.n()
    }
    pub fn p(&self) -> usize {
        self.plant.p()
    }

    /// Distance measure `rᵀ Σ⁻¹ r`, computed as `‖Σ^{-1/2} r‖²`.
    pub fn distance(&self, residual: &Vector) -> f64 {
        (&self.sigma_inv_half * residual).norm_squared()
    }

    /// Advances the loop one step under sensor attack `delta`.
    ///
    /// The residual `y + δ - C x̂` is formed as `C e + η + δ`, with `e`
    /// carried by its own recursion, so it stays accurate when `x` and `x̂`
    /// are large and nearly equal.
    pub fn step(&self, state: &LoopState, noise: &NoiseSample, delta: &Vector) -> StepOutcome {
        let (f, g, c) = (self.plant.f(), self.plant.g(), self.plant.c());
        let u = &self.k * &state.xhat;
        let r = c * &state.e + &noise.eta + delta;
        let z = self.distance(&r);
        let x = f * &state.x + g * &u + &noise.v;
        let xhat = f * &state.xhat + g * &u + &self.l * &r;
        let e = f * &state.e + &noise.v - &self.l * &r;

        #[cfg(debug_assertions)]
        {
            let scale = 1.0 + x.norm() + xhat.norm();
            debug_assert!(
                (&x - &xhat - &e).norm() <= 1e-10 * scale,
                "error recursion drifted"
            );
        }

        StepOutcome {
            next: LoopState {
                x,
                xhat,
                e,
                k: state.k + 1,
            },
            residual: r,
            z,
        }
    }
}

/// True state, estimate and estimation error at step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopState {
    pub x: Vector,
    pub xhat: Vector,
    pub e: Vector,
    pub k: u64,
}

impl LoopState {
    /// `x₀ = x̂₀ = 0`, the linearization origin.
    pub fn origin(n: usize) -> Self {
        Self::new(Vector::zeros(n), Vector::zeros(n))
    }

    pub fn new(x: Vector, xhat: Vector) -> Self {
        let e = &x - &xhat;
        LoopState { x, xhat, e, k: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next: LoopState,
    pub residual: Vector,
    pub z: f64,
}

/// One draw of process and measurement noise.
#[derive(Debug, Clone)]
pub struct NoiseSample {
    pub v: Vector,
    pub eta: Vector,
}

impl NoiseSample {
    pub fn zeros(n: usize, p: usize) -> Self {
        NoiseSample {
            v: Vector::zeros(n),
            eta: Vector::zeros(p),
        }
    }
}

/// Seeded Gaussian noise generator. Stream `s` of seed `x` is independent
/// of every other stream and replays identically.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    seed: u64,
    stream: u64,
    factor_r1: Matrix,
    factor_r2: Matrix,
    rng: ChaCha8Rng,
}

impl NoiseModel {
    pub fn new(plant: &PlantModel, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        NoiseModel {
            seed,
            stream,
            factor_r1: sampling_factor(plant.r1()),
            factor_r2: sampling_factor(plant.r2()),
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn sample(&mut self) -> NoiseSample {
        let n = self.factor_r1.nrows();
        let p = self.factor_r2.nrows();
        let w = Vector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut self.rng)));
        let u = Vector::from_iterator(p, (0..p).map(|_| StandardNormal.sample(&mut self.rng)));
        NoiseSample {
            v: &self.factor_r1 * w,
            eta: &self.factor_r2 * u,
        }
    }
}
