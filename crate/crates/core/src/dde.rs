//! Deterministic delay-differential system for a model spec.
//!
//! For constant total Markovian per-capita removal rate `w_i` in each delay
//! compartment, the expected-count equations close into a system of delay
//! differential equations: instantaneous rate-law terms plus, per delay
//! compartment, a removal term `mu_i e^{-w_i tau_i} x_i(t - tau_i)` that may
//! be routed as influx into a target compartment. History is identically
//! zero before `t = 0`; the initial counts enter as a burst at `t = 0`.
//!
//! Integration uses the method of steps: fixed-step classical Runge-Kutta
//! with cubic Hermite dense output serving the lagged evaluations. The step
//! is capped at a quarter of the smallest delay so every lag lands in
//! completed steps, and the mesh is aligned so multiples of that delay are
//! mesh points, confining the derivative jumps the delay induces to step
//! boundaries.

use crate::model::{Diagnostic, ModelSpec, RateLaw, Source, Target};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DdeError {
    #[error("model failed validation: {0:?}")]
    InvalidSpec(Vec<Diagnostic>),
    #[error(
        "compartment '{0}' has a delay process but state-dependent Markovian removal; \
         only per-capita removal out of a delay compartment is supported"
    )]
    StateDependentDelayCompartment(String),
    #[error("step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("step {step} exceeds a quarter of the smallest delay; maximum usable step is {max_step}")]
    StepTooLarge { step: f64, max_step: f64 },
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
}

/// An instantaneous flow: a rate law moving mass out of one place and into
/// another (either side may be the system boundary).
#[derive(Clone, Debug)]
struct InstantTerm {
    law: RateLaw,
    out_of: Option<usize>,
    into: Option<usize>,
}

/// A lagged flow `coefficient * x_comp(t - tau)` out of `comp`, optionally
/// routed into a target compartment.
#[derive(Clone, Debug)]
struct DelayedTerm {
    coefficient: f64,
    tau: f64,
    comp: usize,
    into: Option<usize>,
}

/// Right-hand side descriptor assembled from a [`ModelSpec`].
#[derive(Clone, Debug)]
pub struct DdeSystem {
    dim: usize,
    initial: Vec<f64>,
    instant: Vec<InstantTerm>,
    delayed: Vec<DelayedTerm>,
}

impl DdeSystem {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Smallest positive delay, if the system has lagged terms at all.
    pub fn min_positive_delay(&self) -> Option<f64> {
        self.delayed
            .iter()
            .map(|d| d.tau)
            .fold(None, |acc: Option<f64>, tau| {
                Some(acc.map_or(tau, |a| a.min(tau)))
            })
    }

    /// Largest step [`solve`] will accept.
    pub fn max_step(&self) -> Option<f64> {
        self.min_positive_delay().map(|tau| tau / 4.0)
    }

    /// Evaluate the derivative at `time` given the current state and a
    /// history lookup for lagged values.
    pub fn rhs<H: Fn(usize, f64) -> f64>(&self, time: f64, state: &[f64], history: H, out: &mut [f64]) {
        out.fill(0.0);
        for term in &self.instant {
            let r = term.law.rate(state);
            if let Some(s) = term.out_of {
                out[s] -= r;
            }
            if let Some(t) = term.into {
                out[t] += r;
            }
        }
        for term in &self.delayed {
            let v = term.coefficient * history(term.comp, time - term.tau);
            out[term.comp] -= v;
            if let Some(t) = term.into {
                out[t] += v;
            }
        }
    }

    /// The algebraic right-hand side with lagged arguments set equal to the
    /// instantaneous ones (what equilibria satisfy).
    pub fn rhs_steady(&self, state: &[f64], out: &mut [f64]) {
        self.rhs(0.0, state, |c, _| state[c], out);
    }
}

/// Assemble the deterministic system for a validated spec.
///
/// Fails if any compartment owning a delay process has Markovian removal
/// that is not plain per-capita (its survival weight `e^{-w tau}` would stop
/// being a constant).
pub fn build_dde(spec: &ModelSpec) -> Result<DdeSystem, DdeError> {
    let diags = spec.validate();
    if !diags.is_empty() {
        return Err(DdeError::InvalidSpec(diags));
    }
    let n = spec.n_compartments();

    // Constant total per-capita removal rate of each delay compartment.
    let mut omega = vec![0.0f64; n];
    for d in &spec.delays {
        for p in &spec.markov {
            if p.source == Source::Compartment(d.source) {
                match &p.law {
                    RateLaw::PerCapita { coefficient, of } if *of == d.source => {
                        omega[d.source] += coefficient;
                    }
                    _ => {
                        return Err(DdeError::StateDependentDelayCompartment(
                            spec.compartments[d.source].name.clone(),
                        ));
                    }
                }
            }
        }
    }

    let instant = spec
        .markov
        .iter()
        .map(|p| InstantTerm {
            law: p.law.clone(),
            out_of: match p.source {
                Source::External => None,
                Source::Compartment(s) => Some(s),
            },
            into: match p.target {
                Target::Sink => None,
                Target::Compartment(t) => Some(t),
            },
        })
        .collect();

    let mut delayed = Vec::new();
    let mut extra_instant: Vec<InstantTerm> = Vec::new();
    for d in &spec.delays {
        let mu = d.params.mu();
        let tau = d.params.tau();
        let coefficient = mu * (-omega[d.source] * tau).exp();
        let into = match d.target {
            Target::Sink => None,
            Target::Compartment(t) => Some(t),
        };
        if tau == 0.0 {
            // No lag: an ordinary per-capita flow.
            extra_instant.push(InstantTerm {
                law: RateLaw::PerCapita { coefficient, of: d.source },
                out_of: Some(d.source),
                into,
            });
        } else {
            delayed.push(DelayedTerm { coefficient, tau, comp: d.source, into });
        }
    }

    let mut instant: Vec<InstantTerm> = instant;
    instant.extend(extra_instant);

    Ok(DdeSystem {
        dim: n,
        initial: spec.initial_counts.iter().map(|&c| c as f64).collect(),
        instant,
        delayed,
    })
}

/// A mesh solution with per-step cubic Hermite interpolants.
///
/// Nodes carry both one-sided derivatives: the delay induces derivative
/// jumps at multiples of `tau` (which the aligned mesh places on nodes), and
/// each interval interpolates its own smooth piece using the right
/// derivative at its left node and the left derivative at its right node.
#[derive(Clone, Debug)]
pub struct DdeSolution {
    times: Vec<f64>,
    values: Vec<f64>,
    derivs_right: Vec<f64>,
    derivs_left: Vec<f64>,
    dim: usize,
}

impl DdeSolution {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn value(&self, idx: usize, comp: usize) -> f64 {
        self.values[idx * self.dim + comp]
    }

    /// Right-sided derivative at a mesh node.
    pub fn deriv(&self, idx: usize, comp: usize) -> f64 {
        self.derivs_right[idx * self.dim + comp]
    }

    /// Dense evaluation. Zero before `t = 0`; clamped to the final value
    /// beyond the mesh.
    pub fn eval(&self, comp: usize, t: f64) -> f64 {
        let mesh = Mesh {
            times: &self.times,
            values: &self.values,
            derivs_right: &self.derivs_right,
            derivs_left: &self.derivs_left,
            dim: self.dim,
        };
        mesh.eval(comp, t)
    }
}

/// Borrowed view shared by the finished solution and the growing state
/// inside the integrator.
struct Mesh<'a> {
    times: &'a [f64],
    values: &'a [f64],
    derivs_right: &'a [f64],
    derivs_left: &'a [f64],
    dim: usize,
}

impl Mesh<'_> {
    fn eval(&self, comp: usize, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let dim = self.dim;
        let last = self.times.len() - 1;
        if t >= self.times[last] {
            return self.values[last * dim + comp];
        }
        let k = match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => return self.values[i * dim + comp],
            Err(i) => i - 1,
        };
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let y0 = self.values[k * dim + comp];
        let y1 = self.values[(k + 1) * dim + comp];
        let f0 = self.derivs_right[k * dim + comp];
        let f1 = self.derivs_left[(k + 1) * dim + comp];
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1
    }

    /// History for stage evaluations inside a step: the step integrates the
    /// smooth piece left of its right endpoint, so a lag landing exactly on
    /// the initial burst takes the left limit (zero history), not the
    /// post-burst value.
    fn eval_left(&self, comp: usize, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            self.eval(comp, t)
        }
    }
}

/// Integrate to `horizon` with (at most) the requested step.
///
/// The effective step divides the smallest positive delay exactly, so the
/// delay-induced derivative discontinuities fall on mesh points; the final
/// step is shortened to land on the horizon.
pub fn solve(sys: &DdeSystem, horizon: f64, step: f64) -> Result<DdeSolution, DdeError> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(DdeError::BadHorizon(horizon));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(DdeError::BadStep(step));
    }
    let h = match sys.max_step() {
        Some(max_step) => {
            if step > max_step {
                return Err(DdeError::StepTooLarge { step, max_step });
            }
            let tau = sys.min_positive_delay().unwrap();
            tau / (tau / step).ceil()
        }
        None => step,
    };

    let dim = sys.dim;
    let mut times = vec![0.0];
    let mut values = sys.initial.clone();
    let mut derivs_right = vec![0.0; dim];
    let mut derivs_left = vec![0.0; dim];

    // Node derivative at t = 0: lags are all in the empty history; the
    // right-sided derivative sees the burst.
    {
        let y0 = values.clone();
        let mut f0 = vec![0.0; dim];
        sys.rhs(0.0, &y0, |_, _| 0.0, &mut f0);
        derivs_right.copy_from_slice(&f0);
        derivs_left.copy_from_slice(&f0);
    }

    let mut stage = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];

    let mut k = 0usize;
    loop {
        let t = times[k];
        if t >= horizon - 1e-12 * horizon {
            break;
        }
        let t_next = ((k + 1) as f64 * h).min(horizon);
        let hk = t_next - t;
        let y: Vec<f64> = values[k * dim..(k + 1) * dim].to_vec();
        let k1: Vec<f64> = derivs_right[k * dim..(k + 1) * dim].to_vec();

        // Every lagged lookup lands in completed mesh intervals because the
        // step never exceeds a quarter of the smallest delay.
        let (y_next, f_left, f_right) = {
            let mesh = Mesh {
                times: &times,
                values: &values,
                derivs_right: &derivs_right,
                derivs_left: &derivs_left,
                dim,
            };
            for i in 0..dim {
                stage[i] = y[i] + 0.5 * hk * k1[i];
            }
            sys.rhs(t + 0.5 * hk, &stage, |c, th| mesh.eval_left(c, th), &mut k2);
            for i in 0..dim {
                stage[i] = y[i] + 0.5 * hk * k2[i];
            }
            sys.rhs(t + 0.5 * hk, &stage, |c, th| mesh.eval_left(c, th), &mut k3);
            for i in 0..dim {
                stage[i] = y[i] + hk * k3[i];
            }
            sys.rhs(t + hk, &stage, |c, th| mesh.eval_left(c, th), &mut k4);
            let mut y_next = vec![0.0; dim];
            for i in 0..dim {
                y_next[i] = y[i] + hk / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            let mut f_left = vec![0.0; dim];
            sys.rhs(t + hk, &y_next, |c, th| mesh.eval_left(c, th), &mut f_left);
            let mut f_right = vec![0.0; dim];
            sys.rhs(t + hk, &y_next, |c, th| mesh.eval(c, th), &mut f_right);
            (y_next, f_left, f_right)
        };

        times.push(t_next);
        values.extend_from_slice(&y_next);
        derivs_left.extend_from_slice(&f_left);
        derivs_right.extend_from_slice(&f_right);
        k += 1;
    }

    Ok(DdeSolution { times, values, derivs_right, derivs_left, dim })
}

/// Why a steady-state search gave up.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("steady-state search did not converge: residual {residual:e} after {iterations} iterations")]
pub struct SteadyStateFailure {
    pub residual: f64,
    pub iterations: usize,
}

/// Residual threshold for a converged equilibrium.
const STEADY_TOL: f64 = 5e-11;

/// Find equilibria of the algebraic system (lagged = instantaneous) by
/// damped Newton from each starting point. Singular Jacobians (systems with
/// conserved quantities have whole manifolds of equilibria) fall back to a
/// regularized least-squares step.
pub fn steady_states(
    sys: &DdeSystem,
    starts: &[Vec<f64>],
) -> Vec<Result<Vec<f64>, SteadyStateFailure>> {
    starts.iter().map(|s| newton_from(sys, s)).collect()
}

fn newton_from(sys: &DdeSystem, start: &[f64]) -> Result<Vec<f64>, SteadyStateFailure> {
    let n = sys.dim;
    let mut y = start.to_vec();
    let mut f = vec![0.0; n];
    let mut best_residual = f64::INFINITY;
    for iter in 0..200 {
        sys.rhs_steady(&y, &mut f);
        let r = inf_norm(&f);
        best_residual = best_residual.min(r);
        if r <= STEADY_TOL {
            return Ok(y);
        }
        let jac = fd_jacobian(sys, &y);
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        // The regularized normal equations behave like a plain Newton step on
        // well-conditioned systems and like a minimum-norm step on manifolds
        // of equilibria, where finite-difference noise would otherwise make a
        // singular Jacobian look merely ill-conditioned and send the plain
        // solve on enormous erratic steps.
        let delta = solve_regularized(&jac, &rhs);
        // Backtrack until the residual actually drops.
        let mut alpha = 1.0;
        let mut trial = vec![0.0; n];
        let mut tf = vec![0.0; n];
        loop {
            for i in 0..n {
                trial[i] = y[i] + alpha * delta[i];
            }
            sys.rhs_steady(&trial, &mut tf);
            if inf_norm(&tf) < r || alpha < 1e-8 {
                break;
            }
            alpha *= 0.5;
        }
        if alpha < 1e-8 && iter > 10 {
            break;
        }
        y.copy_from_slice(&trial);
    }
    sys.rhs_steady(&y, &mut f);
    let r = inf_norm(&f);
    if r <= STEADY_TOL {
        Ok(y)
    } else {
        Err(SteadyStateFailure { residual: r.min(best_residual), iterations: 200 })
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn fd_jacobian(sys: &DdeSystem, y: &[f64]) -> Vec<f64> {
    let n = sys.dim;
    let mut jac = vec![0.0; n * n];
    let mut yp = y.to_vec();
    let mut ym = y.to_vec();
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    for j in 0..n {
        let h = 1e-6 * (1.0 + y[j].abs());
        yp[j] = y[j] + h;
        ym[j] = y[j] - h;
        sys.rhs_steady(&yp, &mut fp);
        sys.rhs_steady(&ym, &mut fm);
        for i in 0..n {
            jac[i * n + j] = (fp[i] - fm[i]) / (2.0 * h);
        }
        yp[j] = y[j];
        ym[j] = y[j];
    }
    jac
}

/// Gaussian elimination with partial pivoting; `None` on a (near) singular
/// pivot.
fn solve_linear(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = inf_norm(a).max(1e-300);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().partial_cmp(&m[j * n + col].abs()).unwrap())
            .unwrap();
        if m[pivot_row * n + col].abs() < 1e-12 * scale {
            return None;
        }
        if pivot_row != col {
            for k in 0..n {
                m.swap(col * n + k, pivot_row * n + k);
            }
            x.swap(col, pivot_row);
        }
        for row in col + 1..n {
            let factor = m[row * n + col] / m[col * n + col];
            for k in col..n {
                m[row * n + k] -= factor * m[col * n + k];
            }
            x[row] -= factor * x[col];
        }
    }
    for col in (0..n).rev() {
        for k in col + 1..n {
            x[col] -= m[col * n + k] * x[k];
        }
        x[col] /= m[col * n + col];
    }
    Some(x)
}

/// Levenberg-regularized least-squares step `(J^T J + r I) d = J^T b`.
fn solve_regularized(jac: &[f64], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut jtj = vec![0.0; n * n];
    let mut jtb = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += jac[k * n + i] * jac[k * n + j];
            }
            jtj[i * n + j] = s;
        }
        let mut s = 0.0;
        for k in 0..n {
            s += jac[k * n + i] * b[k];
        }
        jtb[i] = s;
    }
    let trace: f64 = (0..n).map(|i| jtj[i * n + i]).sum();
    let reg = 1e-10 * (trace / n as f64).max(1e-300);
    for i in 0..n {
        jtj[i * n + i] += reg;
    }
    solve_linear(&jtj, &jtb).unwrap_or_else(|| vec![0.0; n])
}
