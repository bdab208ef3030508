//! Dormand–Prince 5(4) integration with dense output, piecewise release
//! schedules and event location.
//!
//! Segment boundaries of a [`ControlSchedule`] are always mesh points, so a
//! step never straddles a jump of the release rate.

use crate::error::{Error, Result};
use crate::model::{female_growth, rhs_full, FullState, ModelKind, ReducedState};
use crate::params::Params;

/// How the release rate behaves on one segment.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlKind {
    Off,
    Constant(f64),
    /// Piecewise-linear interpolation through `(times[i], rates[i])`,
    /// held constant outside the grid. Times are absolute.
    Sampled { times: Vec<f64>, rates: Vec<f64> },
}

impl ControlKind {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ControlKind::Off => 0.0,
            ControlKind::Constant(r) => *r,
            ControlKind::Sampled { times, rates } => interp_linear(times, rates, t),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ControlKind::Off => Ok(()),
            ControlKind::Constant(r) => {
                if r.is_finite() && *r >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidSchedule(format!("rate {r} is not finite and non-negative")))
                }
            }
            ControlKind::Sampled { times, rates } => {
                if times.is_empty() || times.len() != rates.len() {
                    return Err(Error::InvalidSchedule(
                        "sampled segment needs equally long, non-empty grids".into(),
                    ));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidSchedule(
                        "sample times must be strictly increasing".into(),
                    ));
                }
                if let Some(r) = rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
                    return Err(Error::InvalidSchedule(format!(
                        "sampled rate {r} is not finite and non-negative"
                    )));
                }
                Ok(())
            }
        }
    }

    fn max_rate(&self) -> f64 {
        match self {
            ControlKind::Off => 0.0,
            ControlKind::Constant(r) => *r,
            ControlKind::Sampled { rates, .. } => rates.iter().copied().fold(0.0, f64::max),
        }
    }

    /// Points on `(a, b)` where the rate has a kink or jump, plus the ends.
    fn nodes(&self, a: f64, b: f64) -> Vec<f64> {
        let mut out = vec![a];
        if let ControlKind::Sampled { times, .. } = self {
            out.extend(times.iter().copied().filter(|&t| t > a && t < b));
        }
        out.push(b);
        out
    }

    /// Exact integral of `u` (or `u^2`) over `[a, b]`.
    fn integral(&self, a: f64, b: f64, squared: bool) -> f64 {
        match self {
            ControlKind::Off => 0.0,
            ControlKind::Constant(r) => (b - a) * if squared { r * r } else { *r },
            ControlKind::Sampled { .. } => self
                .nodes(a, b)
                .windows(2)
                .map(|w| {
                    let (ua, ub) = (self.eval(w[0]), self.eval(w[1]));
                    let h = w[1] - w[0];
                    if squared {
                        h * (ua * ua + ua * ub + ub * ub) / 3.0
                    } else {
                        0.5 * h * (ua + ub)
                    }
                })
                .sum(),
        }
    }
}

fn interp_linear(times: &[f64], rates: &[f64], t: f64) -> f64 {
    let n = times.len();
    if t <= times[0] {
        return rates[0];
    }
    if t >= times[n - 1] {
        return rates[n - 1];
    }
    let i = times.partition_point(|&x| x <= t) - 1;
    let w = (t - times[i]) / (times[i + 1] - times[i]);
    rates[i] + w * (rates[i + 1] - rates[i])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub kind: ControlKind,
}

impl Segment {
    pub fn new(start: f64, end: f64, kind: ControlKind) -> Self {
        Segment { start, end, kind }
    }
}

/// Release rate `u(t)` on `[0, T]` as contiguous segments.
///
/// Evaluation is right-continuous at interior boundaries and uses the last
/// segment at `t = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule {
    segments: Vec<Segment>,
    bound: Option<f64>,
}

impl ControlSchedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::InvalidSchedule("no segments".into()))?;
        if first.start != 0.0 {
            return Err(Error::InvalidSchedule(format!(
                "first segment starts at {} instead of 0",
                first.start
            )));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.end > s.start) || !s.end.is_finite() {
                return Err(Error::InvalidSchedule(format!(
                    "segment {i} has empty or invalid span [{}, {}]",
                    s.start, s.end
                )));
            }
            if i > 0 && segments[i - 1].end != s.start {
                return Err(Error::InvalidSchedule(format!(
                    "segments {} and {i} are not contiguous",
                    i - 1
                )));
            }
            s.kind.validate()?;
        }
        Ok(ControlSchedule {
            segments,
            bound: None,
        })
    }

    pub fn off(horizon: f64) -> Result<Self> {
        Self::new(vec![Segment::new(0.0, horizon, ControlKind::Off)])
    }

    pub fn constant(rate: f64, horizon: f64) -> Result<Self> {
        Self::new(vec![Segment::new(0.0, horizon, ControlKind::Constant(rate))])
    }

    /// `values.len()` equal cells of constant rate.
    pub fn piecewise_constant(values: &[f64], horizon: f64) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::InvalidSchedule("no cells".into()));
        }
        let h = horizon / n as f64;
        let segs = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let end = if i + 1 == n { horizon } else { (i + 1) as f64 * h };
                Segment::new(i as f64 * h, end, ControlKind::Constant(v))
            })
            .collect();
        Self::new(segs)
    }

    /// Rate `rate` on `[k period, k period + width)` for every `k`, zero
    /// otherwise.
    pub fn pulses(rate: f64, period: f64, width: f64, horizon: f64) -> Result<Self> {
        if !(period > width && width > 0.0) {
            return Err(Error::InvalidSchedule(format!(
                "pulse width {width} must be positive and shorter than the period {period}"
            )));
        }
        let mut segs = Vec::new();
        let mut t = 0.0;
        let mut k = 0usize;
        while t < horizon {
            let on_end = (t + width).min(horizon);
            segs.push(Segment::new(t, on_end, ControlKind::Constant(rate)));
            k += 1;
            let next = (k as f64 * period).min(horizon);
            if next > on_end {
                segs.push(Segment::new(on_end, next, ControlKind::Off));
            }
            t = next;
        }
        Self::new(segs)
    }

    /// Attaches an upper bound and checks every rate against it.
    pub fn with_bound(mut self, u_bar: f64) -> Result<Self> {
        let max = self.max_rate();
        if max > u_bar {
            return Err(Error::InvalidSchedule(format!(
                "rate {max} exceeds the bound {u_bar}"
            )));
        }
        self.bound = Some(u_bar);
        Ok(self)
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn horizon(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.end)
    }

    pub fn max_rate(&self) -> f64 {
        self.segments.iter().map(|s| s.kind.max_rate()).fold(0.0, f64::max)
    }

    /// Segment boundaries, `0` and `T` included.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.segments.iter().map(|s| s.start).collect();
        out.push(self.horizon());
        out
    }

    fn segment_index(&self, t: f64) -> usize {
        let i = self.segments.partition_point(|s| s.start <= t);
        i.saturating_sub(1)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let s = &self.segments[self.segment_index(t)];
        s.kind.eval(t)
    }

    /// Total number of released individuals, `int_0^T u`.
    pub fn integral(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.kind.integral(s.start, s.end, false))
            .sum()
    }

    /// `int_0^T u^2`.
    pub fn integral_sq(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.kind.integral(s.start, s.end, true))
            .sum()
    }

    /// Same schedule followed by an `Off` segment up to `horizon`.
    pub fn extended(&self, horizon: f64) -> Result<Self> {
        let end = self.horizon();
        if horizon <= end {
            return Ok(self.clone());
        }
        let mut segs = self.segments.clone();
        segs.push(Segment::new(end, horizon, ControlKind::Off));
        let mut out = Self::new(segs)?;
        out.bound = self.bound;
        Ok(out)
    }
}

/// Error tolerances: a step is accepted when the weighted RMS of the local
/// error estimate with weights `abs + rel |y|` is at most one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Tolerance {
    pub fn new(rel: f64, abs: f64) -> Self {
        Tolerance { rel, abs }
    }

    /// `rel` relative and `1e-12 * scale` absolute.
    pub fn scaled(rel: f64, scale: f64) -> Self {
        Tolerance {
            rel,
            abs: 1e-12 * scale,
        }
    }

    /// Default tolerance for population states of the given parameter set.
    pub fn for_params(p: &Params) -> Self {
        Self::scaled(1e-9, p.e_bar().max(p.f_bar()))
    }

    fn validate(&self) -> Result<()> {
        if !(self.rel >= 1e-12 && self.rel.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "tol.rel",
                value: self.rel,
                reason: "relative tolerance must be at least 1e-12",
            });
        }
        if !(self.abs > 0.0 && self.abs.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "tol.abs",
                value: self.abs,
                reason: "absolute tolerance must be positive",
            });
        }
        Ok(())
    }
}

/// Accepted mesh, mesh states and per-step interpolation coefficients of a
/// Dormand–Prince solution, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOutput {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    coeffs: Vec<f64>,
}

impl DenseOutput {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn state_at_mesh(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    fn check_range(&self, t: f64) -> Result<f64> {
        let (a, b) = (self.start(), self.end());
        let slack = 1e-12 * (b - a).abs().max(1.0);
        if !(t >= a - slack && t <= b + slack) {
            return Err(Error::OutOfRange {
                t,
                start: a,
                end: b,
            });
        }
        Ok(t.clamp(a, b))
    }

    /// Writes the interpolated state at `t` into `out`.
    pub fn sample_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let t = self.check_range(t)?;
        let d = self.dim;
        let i = self.times.partition_point(|&x| x <= t);
        if i > 0 && self.times[i - 1] == t {
            out.copy_from_slice(self.state_at_mesh(i - 1));
            return Ok(());
        }
        let k = (i.max(1) - 1).min(self.steps() - 1);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let th = (t - t0) / (t1 - t0);
        let th1 = 1.0 - th;
        let c = &self.coeffs[k * 5 * d..(k + 1) * 5 * d];
        for j in 0..d {
            let r = |m: usize| c[m * d + j];
            out[j] = r(0) + th * (r(1) + th1 * (r(2) + th * (r(3) + th1 * r(4))));
        }
        Ok(())
    }

    pub fn sample(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.sample_into(t, &mut out)?;
        Ok(out)
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[inline]
fn lin<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for &(c, k) in terms {
        for j in 0..N {
            out[j] += h * c * k[j];
        }
    }
    out
}

fn weighted_rms<const N: usize>(v: &[f64; N], y0: &[f64; N], y1: &[f64; N], tol: &Tolerance) -> f64 {
    let mut acc = 0.0;
    for j in 0..N {
        let sk = tol.abs + tol.rel * y0[j].abs().max(y1[j].abs());
        acc += (v[j] / sk).powi(2);
    }
    (acc / N as f64).sqrt()
}

const MAX_STEPS: usize = 5_000_000;

/// Integrates `y' = rhs(k, t, y)` over `knots[0]..knots.last()`, where `k`
/// is the index of the knot interval currently being traversed. Every knot
/// is a mesh point. `check` runs on each accepted state.
pub(crate) fn dopri5<const N: usize, R, C>(
    mut rhs: R,
    mut check: C,
    y0: [f64; N],
    knots: &[f64],
    tol: Tolerance,
) -> Result<DenseOutput>
where
    R: FnMut(usize, f64, &[f64; N]) -> [f64; N],
    C: FnMut(f64, &[f64; N]) -> Result<()>,
{
    tol.validate()?;
    let t_start = knots[0];
    let t_end = *knots.last().unwrap();
    let span = t_end - t_start;
    let mut out = DenseOutput {
        dim: N,
        times: vec![t_start],
        states: y0.to_vec(),
        coeffs: Vec::new(),
    };
    if span <= 0.0 {
        return Ok(out);
    }
    let h_min = 1e-12 * span;
    let mut t = t_start;
    let mut y = y0;
    let mut h = f64::NAN;
    let mut err_old: f64 = 1e-4;
    let mut steps = 0usize;

    for (k, w) in knots.windows(2).enumerate() {
        let b = w[1];
        if !(b > t) {
            continue;
        }
        let mut k1 = rhs(k, t, &y);
        if h.is_nan() {
            h = initial_step(&mut rhs, k, t, &y, &k1, b - t, &tol);
        }
        let mut last_rejected = false;
        while t < b {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::StepSizeUnderflow { t, h });
            }
            let remaining = b - t;
            let mut hs = h.min(remaining);
            if hs * 1.01 >= remaining {
                hs = remaining;
            }
            if hs < h_min && hs < remaining {
                return Err(Error::StepSizeUnderflow { t, h: hs });
            }
            let k2 = rhs(k, t + C2 * hs, &lin(&y, hs, &[(A21, &k1)]));
            let k3 = rhs(k, t + C3 * hs, &lin(&y, hs, &[(A31, &k1), (A32, &k2)]));
            let k4 = rhs(
                k,
                t + C4 * hs,
                &lin(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
            );
            let k5 = rhs(
                k,
                t + C5 * hs,
                &lin(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            );
            let k6 = rhs(
                k,
                t + hs,
                &lin(
                    &y,
                    hs,
                    &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                ),
            );
            let t_new = if hs == remaining { b } else { t + hs };
            let y_new = lin(
                &y,
                hs,
                &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
            );
            let k7 = rhs(k, t_new, &y_new);
            let mut est = [0.0; N];
            for j in 0..N {
                est[j] = hs
                    * (E1 * k1[j] + E3 * k3[j] + E4 * k4[j] + E5 * k5[j] + E6 * k6[j] + E7 * k7[j]);
            }
            let err = weighted_rms(&est, &y, &y_new, &tol);
            let err = if err.is_nan() { f64::INFINITY } else { err };

            // PI controller
            let beta = 0.04;
            let fac11 = err.powf(0.2 - beta * 0.75);
            if err <= 1.0 {
                let fac = (fac11 / err_old.powf(beta) / 0.9).clamp(0.1, 5.0);
                let mut h_new = hs / fac;
                if last_rejected {
                    h_new = h_new.min(hs);
                }
                err_old = err.max(1e-4);
                let base = out.coeffs.len();
                out.coeffs.resize(base + 5 * N, 0.0);
                for j in 0..N {
                    let rc2 = y_new[j] - y[j];
                    let rc3 = hs * k1[j] - rc2;
                    let rc4 = rc2 - hs * k7[j] - rc3;
                    let rc5 = hs
                        * (D1 * k1[j]
                            + D3 * k3[j]
                            + D4 * k4[j]
                            + D5 * k5[j]
                            + D6 * k6[j]
                            + D7 * k7[j]);
                    for (m, v) in [y[j], rc2, rc3, rc4, rc5].into_iter().enumerate() {
                        out.coeffs[base + m * N + j] = v;
                    }
                }
                t = t_new;
                y = y_new;
                check(t, &y)?;
                out.times.push(t);
                out.states.extend_from_slice(&y);
                k1 = k7;
                // keep the proposed step across a knot unless it was clipped
                if hs == remaining && h > hs {
                    h_new = h_new.max(h);
                }
                h = h_new;
                last_rejected = false;
            } else {
                h = hs / (fac11 / 0.9).min(5.0);
                last_rejected = true;
                if h < h_min {
                    return Err(Error::StepSizeUnderflow { t, h });
                }
            }
        }
    }
    Ok(out)
}

fn initial_step<const N: usize, R>(
    rhs: &mut R,
    k: usize,
    t: f64,
    y: &[f64; N],
    f0: &[f64; N],
    h_max: f64,
    tol: &Tolerance,
) -> f64
where
    R: FnMut(usize, f64, &[f64; N]) -> [f64; N],
{
    let sk: Vec<f64> = y.iter().map(|v| tol.abs + tol.rel * v.abs()).collect();
    let norm = |v: &[f64]| {
        (v.iter().zip(&sk).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / N as f64).sqrt()
    };
    let dnf = norm(f0);
    let dny = norm(y);
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        0.01 * dny / dnf
    };
    h = h.min(h_max);
    let y1 = lin(y, h, &[(1.0, f0)]);
    let f1 = rhs(k, t + h, &y1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let der2 = norm(&diff) / h;
    let der12 = der2.abs().max(dnf);
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    (100.0 * h).min(h1).min(h_max)
}

/// Dense solution of one of the population models under an open-loop
/// release schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    model: ModelKind,
    dense: DenseOutput,
    control: ControlSchedule,
}

impl Trajectory {
    pub(crate) fn from_parts(model: ModelKind, dense: DenseOutput, control: ControlSchedule) -> Self {
        Trajectory {
            model,
            dense,
            control,
        }
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    pub fn control(&self) -> &ControlSchedule {
        &self.control
    }

    pub fn dense(&self) -> &DenseOutput {
        &self.dense
    }

    pub fn mesh(&self) -> &[f64] {
        self.dense.times()
    }

    pub fn mesh_state(&self, i: usize) -> &[f64] {
        self.dense.state_at_mesh(i)
    }

    pub fn start(&self) -> f64 {
        self.dense.start()
    }

    pub fn end(&self) -> f64 {
        self.dense.end()
    }

    /// Flat state at `t`: `(F, Ms)` or `(E, M, F, Ms)`.
    pub fn sample(&self, t: f64) -> Result<Vec<f64>> {
        self.dense.sample(t)
    }

    pub fn sample_reduced(&self, t: f64) -> Result<ReducedState> {
        let y = self.sample(t)?;
        let (fi, si) = (self.model.female_index(), self.model.sterile_index());
        Ok(ReducedState::new(y[fi], y[si]))
    }

    /// Full state at `t`. Errors on a reduced trajectory.
    pub fn sample_full(&self, t: f64) -> Result<FullState> {
        if self.model != ModelKind::Full {
            return Err(Error::DomainError("reduced trajectory has no (E, M) components".into()));
        }
        let y = self.sample(t)?;
        Ok(FullState::new(y[0], y[1], y[2], y[3]))
    }

    pub fn females(&self, t: f64) -> Result<f64> {
        Ok(self.sample(t)?[self.model.female_index()])
    }

    pub fn females_at_mesh(&self) -> Vec<f64> {
        let fi = self.model.female_index();
        (0..self.mesh().len()).map(|i| self.mesh_state(i)[fi]).collect()
    }

    pub fn terminal(&self) -> &[f64] {
        self.mesh_state(self.mesh().len() - 1)
    }

    pub fn control_at(&self, t: f64) -> f64 {
        self.control.eval(t)
    }

    /// First sign change of `g` along the trajectory, refined by bisection
    /// on the dense output. Mesh values with `|g| <= band` carry no sign, so
    /// rounding noise around an identically zero `g` is not a crossing.
    /// `direction` restricts to rising or falling crossings.
    pub fn find_crossing<G>(
        &self,
        g: G,
        direction: Crossing,
        band: f64,
    ) -> Result<Option<(f64, Vec<f64>)>>
    where
        G: Fn(f64, &[f64]) -> f64,
    {
        let n = self.mesh().len();
        let mut last: Option<(usize, bool)> = None;
        for i in 0..n {
            let v = g(self.mesh()[i], self.mesh_state(i));
            if v.abs() <= band {
                continue;
            }
            let neg = v < 0.0;
            if let Some((j, prev_neg)) = last {
                if prev_neg != neg {
                    let wanted = match direction {
                        Crossing::Rising => prev_neg,
                        Crossing::Falling => !prev_neg,
                        Crossing::Any => true,
                    };
                    if wanted {
                        return self.refine(&g, self.mesh()[j], self.mesh()[i], prev_neg).map(Some);
                    }
                }
            }
            last = Some((i, neg));
        }
        Ok(None)
    }

    fn refine<G>(&self, g: &G, mut a: f64, mut b: f64, a_neg: bool) -> Result<(f64, Vec<f64>)>
    where
        G: Fn(f64, &[f64]) -> f64,
    {
        let width = 1e-10 * (self.end() - self.start()).max(1.0);
        let mut buf = vec![0.0; self.dense.dim()];
        for _ in 0..200 {
            if b - a <= width {
                break;
            }
            let m = 0.5 * (a + b);
            self.dense.sample_into(m, &mut buf)?;
            let gm = g(m, &buf);
            if gm == 0.0 {
                a = m;
                b = m;
                break;
            }
            if (gm < 0.0) == a_neg {
                a = m;
            } else {
                b = m;
            }
        }
        let t = 0.5 * (a + b);
        Ok((t, self.sample(t)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossing {
    Rising,
    Falling,
    Any,
}

/// Knots of `schedule` clipped to `[a, b]`, and for each knot interval the
/// index of the segment it lies in.
fn knots_for(schedule: &ControlSchedule, a: f64, b: f64) -> (Vec<f64>, Vec<usize>) {
    let mut knots = vec![a];
    let mut seg_of = Vec::new();
    for (i, s) in schedule.segments().iter().enumerate() {
        if s.end <= a || s.start >= b {
            continue;
        }
        let end = s.end.min(b);
        knots.push(end);
        seg_of.push(i);
    }
    if knots.len() == 1 {
        knots.push(b);
        seg_of.push(schedule.segment_index(a));
    }
    (knots, seg_of)
}

pub(crate) fn invariant_checker<const N: usize>(
    model: ModelKind,
    p: &Params,
    y0: &[f64; N],
) -> impl FnMut(f64, &[f64; N]) -> Result<()> {
    let eq: Vec<f64> = match model {
        ModelKind::Reduced => vec![p.f_bar()],
        ModelKind::Full => vec![p.e_bar(), p.m_bar(), p.f_bar()],
    };
    let scale = p.e_bar().max(p.f_bar());
    let slack = 1e-6 * scale;
    let caps: Vec<f64> = eq.iter().zip(y0.iter()).map(|(e, y)| e.max(*y) + slack).collect();
    move |t, y| {
        for (j, v) in y.iter().enumerate() {
            if !v.is_finite() || *v < -slack {
                return Err(Error::InvariantBreach {
                    t,
                    detail: format!("component {j} = {v}"),
                });
            }
            if j < caps.len() && *v > caps[j] {
                return Err(Error::InvariantBreach {
                    t,
                    detail: format!("component {j} = {v} above its equilibrium bound {}", caps[j]),
                });
            }
        }
        Ok(())
    }
}

fn check_initial(y0: &[f64]) -> Result<()> {
    if let Some(v) = y0.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::DomainError(format!(
            "initial state must be finite and non-negative, found {v}"
        )));
    }
    Ok(())
}

fn check_span(u: &ControlSchedule, (a, b): (f64, f64)) -> Result<()> {
    let slack = 1e-12 * u.horizon().max(1.0);
    if !(a >= 0.0 && b >= a && b <= u.horizon() + slack) {
        return Err(Error::InvalidSchedule(format!(
            "time span [{a}, {b}] not inside the schedule horizon [0, {}]",
            u.horizon()
        )));
    }
    Ok(())
}

/// Integrates the reduced model from `s0` under `u` over `t_span`.
pub fn integrate_reduced(
    p: &Params,
    s0: ReducedState,
    u: &ControlSchedule,
    t_span: (f64, f64),
    tol: Tolerance,
) -> Result<Trajectory> {
    let y0 = s0.to_array();
    check_initial(&y0)?;
    check_span(u, t_span)?;
    let (knots, seg_of) = knots_for(u, t_span.0, t_span.1);
    let segs = u.segments();
    let ds = p.delta_s;
    let dense = dopri5(
        |k, t, y: &[f64; 2]| {
            let uk = segs[seg_of[k]].kind.eval(t);
            [female_growth(y[0].max(0.0), y[1].max(0.0), p), uk - ds * y[1]]
        },
        invariant_checker(ModelKind::Reduced, p, &y0),
        y0,
        &knots,
        tol,
    )?;
    Ok(Trajectory::from_parts(ModelKind::Reduced, dense, u.clone()))
}

/// Integrates the full model from `s0` under `u` over `t_span`.
pub fn integrate_full(
    p: &Params,
    s0: FullState,
    u: &ControlSchedule,
    t_span: (f64, f64),
    tol: Tolerance,
) -> Result<Trajectory> {
    let y0 = s0.to_array();
    check_initial(&y0)?;
    check_span(u, t_span)?;
    let (knots, seg_of) = knots_for(u, t_span.0, t_span.1);
    let segs = u.segments();
    let dense = dopri5(
        |k, t, y: &[f64; 4]| {
            let uk = segs[seg_of[k]].kind.eval(t);
            let s = FullState::new(y[0].max(0.0), y[1].max(0.0), y[2].max(0.0), y[3].max(0.0));
            let mut d = rhs_full(s, uk, p);
            d.ms = uk - p.delta_s * y[3];
            d.to_array()
        },
        invariant_checker(ModelKind::Full, p, &y0),
        y0,
        &knots,
        tol,
    )?;
    Ok(Trajectory::from_parts(ModelKind::Full, dense, u.clone()))
}

/// Integrates either model from a flat initial state (`(F, Ms)` or
/// `(E, M, F, Ms)`).
pub fn integrate(
    model: ModelKind,
    p: &Params,
    s0: &[f64],
    u: &ControlSchedule,
    t_span: (f64, f64),
    tol: Tolerance,
) -> Result<Trajectory> {
    if s0.len() != model.dim() {
        return Err(Error::DomainError(format!(
            "{} model expects {} state components, got {}",
            model.name(),
            model.dim(),
            s0.len()
        )));
    }
    match model {
        ModelKind::Reduced => integrate_reduced(p, ReducedState::new(s0[0], s0[1]), u, t_span, tol),
        ModelKind::Full => integrate_full(
            p,
            FullState::new(s0[0], s0[1], s0[2], s0[3]),
            u,
            t_span,
            tol,
        ),
    }
}

/// Integrates and returns the first sign change of `g` with the state
/// there, or `None` when `g` keeps its sign. Values of `g` within
/// `1e-10` of the population scale count as zero.
pub fn locate_event<G>(
    model: ModelKind,
    p: &Params,
    s0: &[f64],
    u: &ControlSchedule,
    g: G,
    t_span: (f64, f64),
    tol: Tolerance,
) -> Result<Option<(f64, Vec<f64>)>>
where
    G: Fn(f64, &[f64]) -> f64,
{
    let traj = integrate(model, p, s0, u, t_span, tol)?;
    let band = 1e-10 * p.e_bar().max(p.f_bar());
    traj.find_crossing(g, Crossing::Any, band)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> Params {
        Params::reference(0.05).unwrap()
    }

    fn decay_only(ms0: f64, u: &ControlSchedule, t1: f64) -> Trajectory {
        let p = reference();
        integrate_reduced(&p, ReducedState::new(0.0, ms0), u, (0.0, t1), Tolerance::new(1e-10, 1e-14))
            .unwrap()
    }

    #[test]
    fn exponential_decay() {
        let tr = decay_only(1.0, &ControlSchedule::off(10.0).unwrap(), 10.0);
        assert_relative_eq!(tr.terminal()[1], (-1.2_f64).exp(), max_relative = 1e-8);
        let mid = 0.5 * (tr.mesh()[1] + tr.mesh()[2]);
        let v = tr.sample(mid).unwrap()[1];
        assert!((v - (-0.12_f64 * mid).exp()).abs() <= 1e-7);
    }

    #[test]
    fn constant_release_closed_form() {
        let u = 1000.0;
        let tr = decay_only(0.0, &ControlSchedule::constant(u, 30.0).unwrap(), 30.0);
        for t in [1.0, 7.5, 30.0] {
            let exact = u / 0.12 * (1.0 - (-0.12_f64 * t).exp());
            assert_relative_eq!(tr.sample(t).unwrap()[1], exact, max_relative = 1e-8);
        }
    }

    #[test]
    fn mesh_points_are_exact_and_include_breakpoints() {
        let u = ControlSchedule::pulses(500.0, 10.0, 1.0, 40.0).unwrap();
        let tr = decay_only(3.0, &u, 40.0);
        for b in u.breakpoints() {
            assert!(tr.mesh().contains(&b), "breakpoint {b} missing");
        }
        for i in 0..tr.mesh().len() {
            let s = tr.sample(tr.mesh()[i]).unwrap();
            assert_eq!(s.as_slice(), tr.mesh_state(i));
        }
    }

    #[test]
    fn sampling_outside_fails() {
        let tr = decay_only(1.0, &ControlSchedule::off(5.0).unwrap(), 5.0);
        assert!(matches!(tr.sample(5.5), Err(Error::OutOfRange { .. })));
        assert!(matches!(tr.sample(-0.1), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn decay_event_at_half_life() {
        let p = reference();
        let c = 50.0;
        let ev = locate_event(
            ModelKind::Reduced,
            &p,
            &[0.0, 2.0 * c],
            &ControlSchedule::off(20.0).unwrap(),
            |_, y| y[1] - c,
            (0.0, 20.0),
            Tolerance::for_params(&p),
        )
        .unwrap()
        .unwrap();
        assert!((ev.0 - 2f64.ln() / p.delta_s).abs() < 1e-8);
    }

    #[test]
    fn no_event_at_equilibrium() {
        let p = reference();
        let ev = locate_event(
            ModelKind::Reduced,
            &p,
            &[p.f_bar(), 0.0],
            &ControlSchedule::off(50.0).unwrap(),
            |_, y| female_growth(y[0], y[1], &p),
            (0.0, 50.0),
            Tolerance::for_params(&p),
        )
        .unwrap();
        assert!(ev.is_none());
    }

    #[test]
    fn schedule_integrals() {
        let u = ControlSchedule::new(vec![
            Segment::new(0.0, 1.0, ControlKind::Off),
            Segment::new(
                1.0,
                3.0,
                ControlKind::Sampled {
                    times: vec![1.0, 2.0, 3.0],
                    rates: vec![0.0, 2.0, 0.0],
                },
            ),
            Segment::new(3.0, 4.0, ControlKind::Constant(3.0)),
        ])
        .unwrap();
        assert_relative_eq!(u.integral(), 2.0 + 3.0, max_relative = 1e-15);
        assert_relative_eq!(u.integral_sq(), 2.0 * 4.0 / 3.0 + 9.0, max_relative = 1e-15);
        assert_eq!(u.eval(1.5), 1.0);
        assert_eq!(u.eval(3.0), 3.0);
        assert_eq!(u.eval(4.0), 3.0);
        assert_eq!(u.eval(0.99), 0.0);
    }

    #[test]
    fn malformed_schedules_rejected() {
        assert!(ControlSchedule::new(vec![]).is_err());
        assert!(ControlSchedule::new(vec![
            Segment::new(0.0, 1.0, ControlKind::Off),
            Segment::new(1.5, 2.0, ControlKind::Off),
        ])
        .is_err());
        assert!(ControlSchedule::constant(-1.0, 2.0).is_err());
        assert!(ControlSchedule::constant(10.0, 2.0).unwrap().with_bound(5.0).is_err());
    }

    #[test]
    fn tolerance_floor() {
        let p = reference();
        let r = integrate_reduced(
            &p,
            ReducedState::equilibrium(&p),
            &ControlSchedule::off(1.0).unwrap(),
            (0.0, 1.0),
            Tolerance::new(1e-13, 1e-9),
        );
        assert!(matches!(r, Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn fifth_order_convergence_on_logistic_like_growth() {
        // F rebounding from a low level under no release
        let p = reference();
        let u = ControlSchedule::off(100.0).unwrap();
        let s0 = ReducedState::new(0.2 * p.f_bar(), 0.0);
        let exact = integrate_reduced(&p, s0, &u, (0.0, 100.0), Tolerance::new(1e-12, 1e-12))
            .unwrap()
            .terminal()[0];
        let err = |rel: f64| {
            let tr = integrate_reduced(&p, s0, &u, (0.0, 100.0), Tolerance::new(rel, 1e-12)).unwrap();
            (tr.terminal()[0] - exact).abs()
        };
        let (e1, e2) = (err(1e-6), err(1e-8));
        assert!(e2 < e1, "{e2} !< {e1}");
    }
}
