//! Named parameter sets, whole-function gradients and central-difference
//! verification of those gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Ordered collection of named tensors.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    /// Appends or replaces `name`.
    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = t,
            None => self.entries.push((name, t)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zeros_like(&self) -> ParamSet {
        let entries = self
            .entries
            .iter()
            .map(|(n, t)| (n.clone(), t.map(|_| 0.0)))
            .collect();
        ParamSet { entries }
    }

    /// `self += other * s`, entry by entry; names must line up.
    pub fn axpy(&mut self, s: f64, other: &ParamSet) {
        assert_eq!(
            self.entries.len(),
            other.entries.len(),
            "parameter sets differ"
        );
        for ((n, t), (m, o)) in self.entries.iter_mut().zip(&other.entries) {
            assert_eq!(n, m, "parameter sets differ");
            for (x, y) in t.data_mut().iter_mut().zip(o.data()) {
                *x += s * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (_, t) in self.entries.iter_mut() {
            for x in t.data_mut() {
                *x *= s;
            }
        }
    }

    /// Entries whose name starts with `prefix`, with the prefix stripped.
    pub fn with_prefix_stripped(&self, prefix: &str) -> ParamSet {
        let entries = self
            .entries
            .iter()
            .filter_map(|(n, t)| n.strip_prefix(prefix).map(|s| (s.to_string(), t.clone())))
            .collect();
        ParamSet { entries }
    }

    pub fn extend_prefixed(&mut self, prefix: &str, other: &ParamSet) {
        for (n, t) in other.iter() {
            self.insert(format!("{prefix}{n}"), t.clone());
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.all_finite())
    }

    /// Bind every entry to the tape as a trainable leaf.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Bound<'t> {
        Bound {
            names: self.names(),
            vars: self
                .entries
                .iter()
                .map(|(_, t)| tape.param(t.clone()))
                .collect(),
        }
    }
}

/// Tape variables for a [`ParamSet`], looked up by name.
pub struct Bound<'t> {
    names: Vec<String>,
    vars: Vec<Var<'t>>,
}

impl<'t> Bound<'t> {
    pub fn get(&self, name: &str) -> Result<Var<'t>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.vars[i])
            .ok_or_else(|| Error::Config(format!("no parameter named {name:?}")))
    }

    pub fn vars(&self) -> &[Var<'t>] {
        &self.vars
    }
}

/// Scalar loss evaluated on a tape over bound parameters.
pub trait TapeFn: for<'t> Fn(&'t Tape, &Bound<'t>) -> Result<Var<'t>> {}
impl<F> TapeFn for F where F: for<'t> Fn(&'t Tape, &Bound<'t>) -> Result<Var<'t>> {}

/// Pin a closure to the [`TapeFn`] signature so its lifetimes are
/// inferred as higher-ranked.
pub fn tape_fn<F>(f: F) -> F
where
    F: for<'t> Fn(&'t Tape, &Bound<'t>) -> Result<Var<'t>>,
{
    f
}

/// Value of `f` and its gradient with respect to every entry of `params`.
pub fn evaluate_with_gradients<F: TapeFn>(f: &F, params: &ParamSet) -> Result<(f64, ParamSet)> {
    let tape = Tape::new();
    let bound = params.bind(&tape);
    let y = f(&tape, &bound)?;
    tape.check_finite()?;
    let value = y.item();
    let grads = tape.grad(y, bound.vars(), false)?;
    let mut out = ParamSet::new();
    for (name, g) in params.names().into_iter().zip(grads) {
        out.insert(name, g.value().as_ref().clone());
    }
    Ok((value, out))
}

/// Value of `f` alone.
pub fn evaluate<F: TapeFn>(f: &F, params: &ParamSet) -> Result<f64> {
    let tape = Tape::new();
    let bound = params.bind(&tape);
    let y = f(&tape, &bound)?;
    tape.check_finite()?;
    Ok(y.item())
}

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Pass iff every parameter's relative error is at most this.
    pub tol: f64,
    /// Parameters with more scalars than this are probed along random
    /// directions instead of coordinate by coordinate.
    pub max_coords: usize,
    pub directions: usize,
    /// Lower bound on the gradient scale used as the error denominator.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            h: 1e-5,
            tol: 1e-4,
            max_coords: 64,
            directions: 12,
            floor: 1e-6,
            seed: 0,
        }
    }
}

impl GradCheckOptions {
    pub fn new(h: f64, tol: f64) -> Self {
        GradCheckOptions {
            h,
            tol,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    /// Max deviation between analytic and numeric derivatives, relative to
    /// the largest derivative magnitude of this parameter.
    pub max_rel_err: f64,
    pub grad_scale: f64,
    pub probes: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub value: f64,
    pub params: Vec<ParamCheck>,
    pub max_rel_err: f64,
    pub tol: f64,
    pub passed: bool,
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for p in &self.params {
            writeln!(
                f,
                "  {:<24} rel_err {:.3e}  |g| {:.3e}  probes {}",
                p.name, p.max_rel_err, p.grad_scale, p.probes
            )?;
        }
        write!(
            f,
            "  max rel err {:.3e} (tol {:.1e}) -> {}",
            self.max_rel_err,
            self.tol,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

/// Compare reverse-mode gradients of `f` to central differences
/// `(f(θ + h e) − f(θ − h e)) / 2h`.
pub fn finite_difference_check<F: TapeFn>(
    f: &F,
    params: &ParamSet,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if !(opts.h > 0.0) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {}",
            opts.h
        )));
    }
    let (value, grads) = evaluate_with_gradients(f, params)?;
    let again = evaluate(f, params)?;
    if again.to_bits() != value.to_bits() {
        return Err(Error::CheckInvalid(format!(
            "function is not deterministic: {value:e} then {again:e}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let h = opts.h;
    let mut checks = Vec::new();
    for (name, g) in grads.iter() {
        let n = g.len();
        let (err, scale, probes) = if n <= opts.max_coords {
            let mut numeric = vec![0.0; n];
            for (i, slot) in numeric.iter_mut().enumerate() {
                let plus = perturbed(params, name, |t| t.data_mut()[i] += h);
                let minus = perturbed(params, name, |t| t.data_mut()[i] -= h);
                *slot = (evaluate(f, &plus)? - evaluate(f, &minus)?) / (2.0 * h);
            }
            let scale = g
                .data()
                .iter()
                .chain(&numeric)
                .fold(0.0f64, |m, x| m.max(x.abs()));
            let err = g
                .data()
                .iter()
                .zip(&numeric)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            (err, scale, n)
        } else {
            let gnorm = g.data().iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut err = 0.0f64;
            for _ in 0..opts.directions {
                let d = Tensor::randn(1, n, 1.0, &mut rng);
                let dn = d.data().iter().map(|x| x * x).sum::<f64>().sqrt();
                let d = d.scale(1.0 / dn);
                let analytic: f64 = g.data().iter().zip(d.data()).map(|(a, b)| a * b).sum();
                let plus = perturbed(params, name, |t| {
                    t.data_mut()
                        .iter_mut()
                        .zip(d.data())
                        .for_each(|(x, y)| *x += h * y)
                });
                let minus = perturbed(params, name, |t| {
                    t.data_mut()
                        .iter_mut()
                        .zip(d.data())
                        .for_each(|(x, y)| *x -= h * y)
                });
                let numeric = (evaluate(f, &plus)? - evaluate(f, &minus)?) / (2.0 * h);
                err = err.max((analytic - numeric).abs());
            }
            (err, gnorm, opts.directions)
        };
        checks.push(ParamCheck {
            name: name.to_string(),
            max_rel_err: err / scale.max(opts.floor),
            grad_scale: scale,
            probes,
        });
    }
    let max_rel_err = checks.iter().fold(0.0f64, |m, c| m.max(c.max_rel_err));
    Ok(GradCheckReport {
        value,
        params: checks,
        max_rel_err,
        tol: opts.tol,
        passed: max_rel_err <= opts.tol,
    })
}

fn perturbed(params: &ParamSet, name: &str, edit: impl FnOnce(&mut Tensor)) -> ParamSet {
    let mut p = params.clone();
    edit(p.get_mut(name).expect("name comes from the same set"));
    p
}
