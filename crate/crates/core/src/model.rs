//! Right-hand sides of the two population models and the analytic facts
//! about them: partial derivatives of the female growth term, the sterile
//! male level that stops female growth, equilibria and linear stability.
//!
//! The reduced model tracks fertilized females `F` and sterile males `Ms`:
//!
//! ```text
//! F'  = f(F, Ms)
//! Ms' = u - delta_s Ms
//! ```
//!
//! The full model adds the aquatic phase `E` and wild males `M`.

use nalgebra::{Complex, Matrix4};

use crate::error::{Error, Result};
use crate::params::Params;

/// Which of the two population models a computation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Females and sterile males only.
    Reduced,
    /// Aquatic phase, wild males, females and sterile males.
    Full,
}

impl ModelKind {
    pub fn dim(self) -> usize {
        match self {
            ModelKind::Reduced => 2,
            ModelKind::Full => 4,
        }
    }

    /// Position of `F` in the flat state vector.
    pub fn female_index(self) -> usize {
        match self {
            ModelKind::Reduced => 0,
            ModelKind::Full => 2,
        }
    }

    /// Position of `Ms` in the flat state vector.
    pub fn sterile_index(self) -> usize {
        self.dim() - 1
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Reduced => "reduced",
            ModelKind::Full => "full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReducedState {
    pub f: f64,
    pub ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FullState {
    pub e: f64,
    pub m: f64,
    pub f: f64,
    pub ms: f64,
}

impl ReducedState {
    pub fn new(f: f64, ms: f64) -> Self {
        ReducedState { f, ms }
    }

    /// Persistence equilibrium without sterile males.
    pub fn equilibrium(p: &Params) -> Self {
        ReducedState { f: p.f_bar(), ms: 0.0 }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.f, self.ms]
    }

    pub fn from_array(y: [f64; 2]) -> Self {
        ReducedState { f: y[0], ms: y[1] }
    }
}

impl FullState {
    pub fn new(e: f64, m: f64, f: f64, ms: f64) -> Self {
        FullState { e, m, f, ms }
    }

    pub fn equilibrium(p: &Params) -> Self {
        FullState {
            e: p.e_bar(),
            m: p.m_bar(),
            f: p.f_bar(),
            ms: 0.0,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.e, self.m, self.f, self.ms]
    }

    pub fn from_array(y: [f64; 4]) -> Self {
        FullState {
            e: y[0],
            m: y[1],
            f: y[2],
            ms: y[3],
        }
    }
}

/// Female growth term of the reduced model in its original factored form.
///
/// `f(0, Ms) = 0` for every `Ms >= 0`, including the `0/0` corner.
pub fn female_growth(f: f64, ms: f64, p: &Params) -> f64 {
    if f == 0.0 {
        return 0.0;
    }
    let aq = p.beta_e * f / p.k + p.aquatic_exit();
    let one_minus_nu = 1.0 - p.nu;
    let denom = aq * (one_minus_nu * p.nu_e * p.beta_e * f + p.delta_m * p.gamma_s * ms * aq);
    let num = p.nu * one_minus_nu * (p.beta_e * p.nu_e * f).powi(2);
    num / denom - p.delta_f * f
}

pub fn rhs_reduced(s: ReducedState, u: f64, p: &Params) -> ReducedState {
    ReducedState {
        f: female_growth(s.f, s.ms, p),
        ms: u - p.delta_s * s.ms,
    }
}

/// Fraction of matings with wild males, `M / (M + gamma_s Ms)`, with
/// `0/0 := 0`.
#[inline]
fn fertile_fraction(m: f64, ms: f64, gamma_s: f64) -> f64 {
    let d = m + gamma_s * ms;
    if d == 0.0 {
        0.0
    } else {
        m / d
    }
}

pub fn rhs_full(s: FullState, u: f64, p: &Params) -> FullState {
    FullState {
        e: p.beta_e * s.f * (1.0 - s.e / p.k) - p.aquatic_exit() * s.e,
        m: (1.0 - p.nu) * p.nu_e * s.e - p.delta_m * s.m,
        f: p.nu * p.nu_e * s.e * fertile_fraction(s.m, s.ms, p.gamma_s) - p.delta_f * s.f,
        ms: u - p.delta_s * s.ms,
    }
}

/// Jacobian of the full model with respect to `(E, M, F, Ms)`.
///
/// At `M = Ms = 0` the mating fraction is taken as its limit along
/// `Ms = 0`, i.e. one, which is what the linearization at the extinction
/// equilibrium requires.
pub fn jacobian_full(s: FullState, p: &Params) -> Matrix4<f64> {
    let nn = p.nu * p.nu_e;
    let d = s.m + p.gamma_s * s.ms;
    let (frac, dfrac_dm, dfrac_dms) = if d == 0.0 {
        (1.0, 0.0, 0.0)
    } else {
        (
            s.m / d,
            p.gamma_s * s.ms / (d * d),
            -p.gamma_s * s.m / (d * d),
        )
    };
    Matrix4::new(
        -p.beta_e * s.f / p.k - p.aquatic_exit(),
        0.0,
        p.beta_e * (1.0 - s.e / p.k),
        0.0,
        (1.0 - p.nu) * p.nu_e,
        -p.delta_m,
        0.0,
        0.0,
        nn * frac,
        nn * s.e * dfrac_dm,
        -p.delta_f,
        nn * s.e * dfrac_dms,
        0.0,
        0.0,
        0.0,
        -p.delta_s,
    )
}

/// Value and partial derivatives of `f` at a point with `F > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partials {
    pub f: f64,
    pub df_df: f64,
    pub df_dms: f64,
    pub d2f_dms2: f64,
    pub d2f_dms_df: f64,
}

/// Closed-form partials through the rational parametrization
/// `f = mu F^2 Lambda - delta_F F`.
pub fn f_partials(f: f64, ms: f64, p: &Params) -> Result<Partials> {
    if !(f > 0.0) {
        return Err(Error::DomainError(format!(
            "partials of f require F > 0, got F = {f}"
        )));
    }
    let lf = p.lambda_form();
    let q = lf.alpha * f * f + lf.beta * f + lf.gamma;
    let dq = 2.0 * lf.alpha * f + lf.beta;
    let pp = 2.0 * f + lf.a + ms * dq;
    let lam = 1.0 / (f * f + lf.a * f + ms * q);
    let lam2 = lam * lam;
    let lam3 = lam2 * lam;
    let mu = lf.mu;
    Ok(Partials {
        f: mu * f * f * lam - p.delta_f * f,
        df_df: 2.0 * mu * f * lam - mu * f * f * lam2 * pp - p.delta_f,
        df_dms: -mu * f * f * lam2 * q,
        d2f_dms2: 2.0 * mu * f * f * lam3 * q * q,
        d2f_dms_df: -mu * f * lam2 * (2.0 * q + f * dq) + 2.0 * mu * f * f * lam3 * pp * q,
    })
}

/// Sterile-male level at which female growth vanishes.
///
/// For `F` in `(0, F_bar)` this is the unique `Ms > 0` with `f(F, Ms) = 0`;
/// `f` is positive below it and negative above. Returns zero for `F = 0` and
/// for `F >= F_bar`, where no positive level stops decline.
pub fn phi_threshold(f: f64, p: &Params) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    let aq = p.beta_e * f / p.k + p.aquatic_exit();
    let surplus = p.nu * p.beta_e * p.nu_e - p.delta_f * aq;
    if surplus <= 0.0 {
        return 0.0;
    }
    let phi = (1.0 - p.nu) * p.beta_e * p.nu_e * surplus / (p.delta_f * aq * aq) * f;
    phi / (p.delta_m * p.gamma_s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    /// Every eigenvalue has negative real part.
    Stable,
    /// At least one eigenvalue has positive real part.
    Unstable,
    /// Some eigenvalue lies on the imaginary axis (to rounding).
    Marginal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub state: FullState,
    pub eigenvalues: Vec<Complex<f64>>,
    pub stability: Stability,
}

fn classify(eigs: &[Complex<f64>], scale: f64) -> Stability {
    let tol = 1e-12 * scale.max(1.0);
    if eigs.iter().any(|z| z.re > tol) {
        Stability::Unstable
    } else if eigs.iter().all(|z| z.re < -tol) {
        Stability::Stable
    } else {
        Stability::Marginal
    }
}

fn linearize(state: FullState, p: &Params) -> Equilibrium {
    let jac = jacobian_full(state, p);
    let scale = jac.abs().max();
    let mut eigenvalues: Vec<Complex<f64>> = jac.complex_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let stability = classify(&eigenvalues, scale);
    Equilibrium {
        state,
        eigenvalues,
        stability,
    }
}

/// Equilibria of the full model under a constant release rate, with the
/// eigenvalues of the analytic Jacobian.
///
/// The extinction equilibrium is always returned first. For `u_const = 0`
/// the persistence equilibrium follows; for `0 < u_const <= U*` the two
/// positive roots of the quadratic in `E` follow (smaller first); above
/// `U*` extinction is the only equilibrium.
pub fn equilibria_and_stability(p: &Params, u_const: f64) -> Result<Vec<Equilibrium>> {
    if !(u_const >= 0.0 && u_const.is_finite()) {
        return Err(Error::DomainError(format!(
            "release rate must be finite and non-negative, got {u_const}"
        )));
    }
    let ms = u_const / p.delta_s;
    let mut out = vec![linearize(FullState::new(0.0, 0.0, 0.0, ms), p)];
    if u_const == 0.0 {
        out.push(linearize(FullState::equilibrium(p), p));
        return Ok(out);
    }
    for e in positive_equilibrium_eggs(p, u_const) {
        let m = (1.0 - p.nu) * p.nu_e * e / p.delta_m;
        let f = p.nu * p.nu_e * e * fertile_fraction(m, ms, p.gamma_s) / p.delta_f;
        out.push(linearize(FullState::new(e, m, f, ms), p));
    }
    Ok(out)
}

/// Positive roots `E` of the equilibrium quadratic under constant release
/// `u_const > 0`; empty when the discriminant is negative.
pub fn positive_equilibrium_eggs(p: &Params, u_const: f64) -> Vec<f64> {
    let r0 = p.offspring_number();
    let lead = p.beta_e * p.nu * (1.0 - p.nu) * p.nu_e * p.nu_e / (p.delta_f * p.delta_m);
    let a2 = lead / p.k;
    let a1 = lead * (1.0 - 1.0 / r0);
    let a0 = p.gamma_s * p.aquatic_exit() * u_const / p.delta_s;
    let disc = a1 * a1 - 4.0 * a2 * a0;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    // stable form for the smaller root
    let big = (a1 + sq) / (2.0 * a2);
    let small = a0 / (a2 * big);
    if disc == 0.0 {
        vec![big]
    } else {
        vec![small, big]
    }
}
