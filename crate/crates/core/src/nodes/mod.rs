//! Function-set members and node construction.
//!
//! A node holds `k` outputs, one per class. Parameters are fitted on the
//! training half against the one-vs-rest targets and then frozen; the same
//! [`apply`] routine produces training, validation and prediction outputs.

pub mod classifiers;
pub mod ols;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, OvrTargets};
use crate::error::{Error, Result};
use crate::metrics::macro_f1;
use crate::semantics::{behavior_from_labels, BehaviorVector, Semantics};
use classifiers::{ClassifierState, GaussianNb, MultinomialNb, NearestCentroid};
use ols::ols_fit;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionKind {
    Add,
    Mul,
    Max,
    Min,
    Sqrt,
    Abs,
    Sin,
    Tan,
    Atan,
    Tanh,
    Hypot,
    NbGauss,
    NbMultinomial,
    NearestCentroid,
    Terminal,
}

impl FunctionKind {
    /// Every non-terminal kind, in declaration order.
    pub const FUNCTIONS: [FunctionKind; 14] = [
        FunctionKind::Add,
        FunctionKind::Mul,
        FunctionKind::Max,
        FunctionKind::Min,
        FunctionKind::Sqrt,
        FunctionKind::Abs,
        FunctionKind::Sin,
        FunctionKind::Tan,
        FunctionKind::Atan,
        FunctionKind::Tanh,
        FunctionKind::Hypot,
        FunctionKind::NbGauss,
        FunctionKind::NbMultinomial,
        FunctionKind::NearestCentroid,
    ];

    pub fn default_arity(self) -> usize {
        use FunctionKind::*;
        match self {
            Add => 60,
            Mul => 20,
            Max | Min | NbGauss | NbMultinomial => 5,
            Hypot | NearestCentroid => 2,
            Sqrt | Abs | Sin | Tan | Atan | Tanh => 1,
            Terminal => 0,
        }
    }

    pub fn is_unary(self) -> bool {
        self.default_arity() == 1
    }

    /// Kinds that accept fewer arguments than their nominal arity when the
    /// population is small.
    pub fn is_variadic(self) -> bool {
        use FunctionKind::*;
        matches!(
            self,
            Add | Mul | Max | Min | NbGauss | NbMultinomial | NearestCentroid
        )
    }

    pub fn is_classifier(self) -> bool {
        use FunctionKind::*;
        matches!(self, NbGauss | NbMultinomial | NearestCentroid)
    }

    /// Elementwise kinds followed by a per-class affine fit.
    pub fn is_transform(self) -> bool {
        use FunctionKind::*;
        matches!(
            self,
            Mul | Max | Min | Sqrt | Abs | Sin | Tan | Atan | Tanh | Hypot
        )
    }

    pub fn name(self) -> &'static str {
        use FunctionKind::*;
        match self {
            Add => "add",
            Mul => "mul",
            Max => "max",
            Min => "min",
            Sqrt => "sqrt",
            Abs => "abs",
            Sin => "sin",
            Tan => "tan",
            Atan => "atan",
            Tanh => "tanh",
            Hypot => "hypot",
            NbGauss => "nb",
            NbMultinomial => "mn",
            NearestCentroid => "nc",
            Terminal => "x",
        }
    }
}

impl fmt::Display for FunctionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FunctionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        FunctionKind::FUNCTIONS
            .iter()
            .chain(std::iter::once(&FunctionKind::Terminal))
            .copied()
            .find(|k| k.name() == lower)
            .ok_or_else(|| Error::Config(format!("unknown function `{s}`")))
    }
}

/// A function-set entry: kind plus nominal arity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Function {
    pub kind: FunctionKind,
    pub arity: usize,
}

impl Function {
    pub fn new(kind: FunctionKind) -> Self {
        Self {
            kind,
            arity: kind.default_arity(),
        }
    }

    /// Number of arguments to draw from a population of `live` individuals,
    /// or `None` when the function cannot be built.
    pub fn effective_arity(&self, live: usize) -> Option<usize> {
        let min = if self.kind.is_variadic() {
            self.arity.min(2)
        } else {
            self.arity
        };
        let n = if self.kind.is_variadic() {
            self.arity.min(live)
        } else {
            self.arity
        };
        (n >= min && n <= live && n >= 1).then_some(n)
    }
}

pub fn default_function_set() -> Vec<Function> {
    FunctionKind::FUNCTIONS
        .iter()
        .map(|&k| Function::new(k))
        .collect()
}

/// How the arguments of an addition node become regression columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnMode {
    /// Class c is fitted on the class-c output of each argument.
    #[default]
    PerClass,
    /// Class c is fitted on every output of every argument.
    AllOutputs,
}

/// Frozen parameters of a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Params {
    /// `out[c] = coef[c] * x_feature`
    Terminal { feature: usize, coef: Vec<f64> },
    /// `coef[c]` weights the columns chosen by `columns`.
    Linear {
        coef: Vec<Vec<f64>>,
        columns: ColumnMode,
    },
    /// `out[c] = coef[c][0] + coef[c][1] * f(args)`
    Affine {
        coef: Vec<[f64; 2]>,
        protected: bool,
    },
    /// Fitted on the raw features when the node has no arguments.
    Classifier(ClassifierState),
}

impl Params {
    pub fn is_finite(&self) -> bool {
        match self {
            Params::Terminal { coef, .. } => coef.iter().all(|v| v.is_finite()),
            Params::Linear { coef, .. } => coef.iter().flatten().all(|v| v.is_finite()),
            Params::Affine { coef, .. } => coef.iter().flatten().all(|v| v.is_finite()),
            Params::Classifier(state) => state.is_finite(),
        }
    }
}

/// Construction switches shared by every node of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeOptions {
    pub intercept: bool,
    pub protected: bool,
    pub add_columns: ColumnMode,
}

impl Default for NodeOptions {
    fn default() -> Self {
        Self {
            intercept: true,
            protected: false,
            add_columns: ColumnMode::PerClass,
        }
    }
}

/// One half of the data as seen by node construction.
#[derive(Debug, Clone)]
pub struct Sample {
    /// Column-major raw features.
    pub columns: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub targets: OvrTargets,
    pub k: usize,
}

impl Sample {
    pub fn from_dataset(ds: &Dataset) -> Self {
        Self {
            columns: ds.columns(),
            labels: ds.labels().to_vec(),
            targets: OvrTargets::from_labels(ds.labels(), ds.k()),
            k: ds.k(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn m(&self) -> usize {
        self.columns.len()
    }

    fn column_refs(&self) -> Vec<&[f64]> {
        self.columns.iter().map(Vec::as_slice).collect()
    }
}

/// An individual with its cached behavior on both halves.
#[derive(Debug, Clone)]
pub struct Node {
    pub id: NodeId,
    pub kind: FunctionKind,
    pub args: Vec<NodeId>,
    pub params: Params,
    pub train: Semantics,
    pub val: Semantics,
    pub train_labels: Vec<usize>,
    pub behavior: BehaviorVector,
    pub fitness: f64,
    pub val_fitness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscardReason {
    NonFinite,
    FitFailed,
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Node(Box<Node>),
    Discard(DiscardReason),
}

impl Outcome {
    pub fn node(self) -> Option<Node> {
        match self {
            Outcome::Node(n) => Some(*n),
            Outcome::Discard(_) => None,
        }
    }
}

/// Each argument contributes its `k` outputs as consecutive columns.
pub fn feature_columns<'a>(args: &[&'a Semantics]) -> Result<Vec<&'a [f64]>> {
    let n = args.first().map_or(0, |s| s.len());
    let mut cols = Vec::new();
    for s in args {
        if s.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: s.len(),
            });
        }
        cols.extend(s.scores().iter().map(Vec::as_slice));
    }
    Ok(cols)
}

fn linear_columns<'a>(
    args: &[&'a Semantics],
    c: usize,
    mode: ColumnMode,
) -> Result<Vec<&'a [f64]>> {
    match mode {
        ColumnMode::PerClass => Ok(args.iter().map(|s| s.class(c)).collect()),
        ColumnMode::AllOutputs => feature_columns(args),
    }
}

/// Raw elementwise value of a transform for class `c`, before the affine fit.
fn transform_raw(kind: FunctionKind, args: &[&Semantics], c: usize, protected: bool) -> Vec<f64> {
    use FunctionKind::*;
    let first = args[0].class(c);
    match kind {
        Mul => {
            let mut out = first.to_vec();
            for a in &args[1..] {
                for (o, v) in out.iter_mut().zip(a.class(c)) {
                    *o *= v;
                }
            }
            out
        }
        Max | Min => {
            let mut out = first.to_vec();
            for a in &args[1..] {
                for (o, &v) in out.iter_mut().zip(a.class(c)) {
                    *o = if kind == Max { o.max(v) } else { o.min(v) };
                }
            }
            out
        }
        Hypot => first
            .iter()
            .zip(args[1].class(c))
            .map(|(a, b)| a.hypot(*b))
            .collect(),
        Sqrt if protected => first.iter().map(|v| v.abs().sqrt()).collect(),
        Sqrt => first.iter().map(|v| v.sqrt()).collect(),
        Abs => first.iter().map(|v| v.abs()).collect(),
        Sin => first.iter().map(|v| v.sin()).collect(),
        Tan => first.iter().map(|v| v.tan()).collect(),
        Atan => first.iter().map(|v| v.atan()).collect(),
        Tanh => first.iter().map(|v| v.tanh()).collect(),
        _ => unreachable!("{kind} is not a transform"),
    }
}

fn fit_affine(
    kind: FunctionKind,
    args: &[&Semantics],
    targets: &OvrTargets,
    intercept: bool,
    protected: bool,
) -> Result<Vec<[f64; 2]>> {
    let ones = vec![1.0; targets.len()];
    (0..targets.k())
        .map(|c| {
            let raw = transform_raw(kind, args, c, protected);
            if raw.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("transform output"));
            }
            if intercept {
                let r = ols_fit(&[&ones, &raw], targets.class(c))?;
                Ok([r.coefficients[0], r.coefficients[1]])
            } else {
                Ok([0.0, ols_fit(&[&raw], targets.class(c))?.coefficients[0]])
            }
        })
        .collect()
}

fn check_arg_count(kind: FunctionKind, n_args: usize) -> Result<()> {
    use FunctionKind::*;
    let ok = match kind {
        Terminal => n_args == 0,
        Add | Mul | Max | Min => n_args >= 2,
        Hypot => n_args == 2,
        NbGauss | NbMultinomial | NearestCentroid => true,
        _ => n_args == 1,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{kind} cannot take {n_args} arguments"
        )))
    }
}

fn uniform_k(args: &[&Semantics], k: usize, n: usize) -> Result<()> {
    for a in args {
        if a.k() != k {
            return Err(Error::LengthMismatch {
                expected: k,
                actual: a.k(),
            });
        }
        if a.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: a.len(),
            });
        }
    }
    Ok(())
}

/// Evaluates frozen parameters. Entries may come out non-finite; callers choose
/// whether that discards the node or is coerced.
pub fn apply(
    kind: FunctionKind,
    params: &Params,
    args: &[&Semantics],
    raw: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let n = args
        .first()
        .map(|s| s.len())
        .or_else(|| raw.first().map(Vec::len))
        .unwrap_or(0);
    Ok(match (kind, params) {
        (FunctionKind::Terminal, Params::Terminal { feature, coef }) => {
            let x = raw.get(*feature).ok_or(Error::ColumnMismatch {
                expected: feature + 1,
                actual: raw.len(),
            })?;
            coef.iter()
                .map(|w| x.iter().map(|v| w * v).collect())
                .collect()
        }
        (FunctionKind::Add, Params::Linear { coef, columns }) => {
            let mut out = Vec::with_capacity(coef.len());
            for (c, w) in coef.iter().enumerate() {
                let cols = linear_columns(args, c, *columns)?;
                let mut acc = vec![0.0; n];
                for (col, &wi) in cols.iter().zip(w) {
                    for (a, v) in acc.iter_mut().zip(col.iter()) {
                        *a += wi * v;
                    }
                }
                out.push(acc);
            }
            out
        }
        (k, Params::Affine { coef, protected }) if k.is_transform() => coef
            .iter()
            .enumerate()
            .map(|(c, [a, b])| {
                transform_raw(k, args, c, *protected)
                    .into_iter()
                    .map(|v| a + b * v)
                    .collect()
            })
            .collect(),
        (k, Params::Classifier(state)) if k.is_classifier() => {
            if args.is_empty() {
                let cols: Vec<&[f64]> = raw.iter().map(Vec::as_slice).collect();
                state.predict(&cols)
            } else {
                state.predict(&feature_columns(args)?)
            }
        }
        (k, p) => {
            return Err(Error::ModelFormat(format!(
                "parameters {:?} do not fit function {k}",
                std::mem::discriminant(p)
            )))
        }
    })
}

/// Fits the parameters of `kind` on the training half. `Ok(None)` means the
/// fit was numerically impossible.
pub fn fit_params(
    kind: FunctionKind,
    args: &[&Semantics],
    train: &Sample,
    opts: &NodeOptions,
) -> Result<Option<Params>> {
    check_arg_count(kind, args.len())?;
    uniform_k(args, train.k, train.len())?;
    let k = train.k;
    let params = match kind {
        FunctionKind::Terminal => unreachable!("terminals are built by make_terminal"),
        FunctionKind::Add => {
            let mut coef = Vec::with_capacity(k);
            for c in 0..k {
                let cols = linear_columns(args, c, opts.add_columns)?;
                match ols_fit(&cols, train.targets.class(c)) {
                    Ok(r) => coef.push(r.coefficients),
                    Err(_) => return Ok(None),
                }
            }
            Params::Linear {
                coef,
                columns: opts.add_columns,
            }
        }
        k_ if k_.is_transform() => {
            match fit_affine(kind, args, &train.targets, opts.intercept, opts.protected) {
                Ok(coef) => Params::Affine {
                    coef,
                    protected: opts.protected,
                },
                Err(_) => return Ok(None),
            }
        }
        _ => {
            let cols = if args.is_empty() {
                train.column_refs()
            } else {
                feature_columns(args)?
            };
            if cols.iter().any(|c| c.iter().any(|v| !v.is_finite())) {
                return Ok(None);
            }
            Params::Classifier(fit_classifier(kind, &cols, &train.labels, k))
        }
    };
    Ok(params.is_finite().then_some(params))
}

pub fn fit_classifier(
    kind: FunctionKind,
    cols: &[&[f64]],
    labels: &[usize],
    k: usize,
) -> ClassifierState {
    match kind {
        FunctionKind::NbGauss => ClassifierState::GaussianNb(GaussianNb::fit(cols, labels, k)),
        FunctionKind::NbMultinomial => {
            ClassifierState::MultinomialNb(MultinomialNb::fit(cols, labels, k))
        }
        FunctionKind::NearestCentroid => {
            ClassifierState::NearestCentroid(NearestCentroid::fit(cols, labels, k))
        }
        _ => unreachable!("{kind} is not a classifier"),
    }
}

/// Gaussian naive Bayes log-likelihoods of `eval` after fitting on `features`.
pub fn fit_nb_gauss(
    features: &[&[f64]],
    labels: &[usize],
    k: usize,
    eval: &[&[f64]],
) -> Result<Semantics> {
    Semantics::new(GaussianNb::fit(features, labels, k).predict(eval))
}

pub fn fit_nb_multinomial(
    features: &[&[f64]],
    labels: &[usize],
    k: usize,
    eval: &[&[f64]],
) -> Result<Semantics> {
    Semantics::new(MultinomialNb::fit(features, labels, k).predict(eval))
}

pub fn fit_nearest_centroid(
    features: &[&[f64]],
    labels: &[usize],
    k: usize,
    eval: &[&[f64]],
) -> Result<Semantics> {
    Semantics::new(NearestCentroid::fit(features, labels, k).predict(eval))
}

/// Addition node over `args`: per-class OLS against the targets.
pub fn eval_addition(
    args: &[&Semantics],
    targets: &OvrTargets,
    columns: ColumnMode,
) -> Result<(Semantics, Params)> {
    if args.len() < 2 {
        return Err(Error::Config(
            "addition needs at least two arguments".into(),
        ));
    }
    uniform_k(args, targets.k(), targets.len())?;
    let mut coef = Vec::with_capacity(targets.k());
    for c in 0..targets.k() {
        let cols = linear_columns(args, c, columns)?;
        coef.push(ols_fit(&cols, targets.class(c))?.coefficients);
    }
    let params = Params::Linear { coef, columns };
    let out = apply(FunctionKind::Add, &params, args, &[])?;
    Ok((Semantics::new(out)?, params))
}

/// Transform node over `args` with a per-class affine (or slope-only) fit.
pub fn eval_transform(
    kind: FunctionKind,
    args: &[&Semantics],
    targets: &OvrTargets,
    intercept: bool,
    protected: bool,
) -> Result<(Semantics, Params)> {
    if !kind.is_transform() {
        return Err(Error::Config(format!("{kind} is not a transform")));
    }
    uniform_k(args, targets.k(), targets.len())?;
    check_arg_count(kind, args.len())?;
    let coef = fit_affine(kind, args, targets, intercept, protected)?;
    let params = Params::Affine { coef, protected };
    let out = apply(kind, &params, args, &[])?;
    Ok((Semantics::new(out)?, params))
}

fn finish_node(
    id: NodeId,
    kind: FunctionKind,
    arg_ids: Vec<NodeId>,
    params: Params,
    train_out: Vec<Vec<f64>>,
    val_out: Vec<Vec<f64>>,
    train: &Sample,
    val: &Sample,
) -> Result<Outcome> {
    let (Ok(train_sem), Ok(val_sem)) = (Semantics::new(train_out), Semantics::new(val_out)) else {
        return Ok(Outcome::Discard(DiscardReason::NonFinite));
    };
    let train_labels = train_sem.to_labels()?;
    let val_labels = val_sem.to_labels()?;
    let fitness = macro_f1(&train.labels, &train_labels, train.k)?;
    let val_fitness = macro_f1(&val.labels, &val_labels, val.k)?;
    let behavior = behavior_from_labels(&train_labels, &train.labels)?;
    Ok(Outcome::Node(Box::new(Node {
        id,
        kind,
        args: arg_ids,
        params,
        train: train_sem,
        val: val_sem,
        train_labels,
        behavior,
        fitness,
        val_fitness,
    })))
}

/// `θ_c · x_feature` with one slope per class, no intercept.
pub fn make_terminal(id: NodeId, feature: usize, train: &Sample, val: &Sample) -> Result<Outcome> {
    if feature >= train.m() || feature >= val.m() {
        return Err(Error::ColumnMismatch {
            expected: feature + 1,
            actual: train.m().min(val.m()),
        });
    }
    let x = &train.columns[feature];
    let mut coef = Vec::with_capacity(train.k);
    for c in 0..train.k {
        match ols_fit(&[x], train.targets.class(c)) {
            Ok(r) => coef.push(r.coefficients[0]),
            Err(_) => return Ok(Outcome::Discard(DiscardReason::FitFailed)),
        }
    }
    let params = Params::Terminal { feature, coef };
    let train_out = apply(FunctionKind::Terminal, &params, &[], &train.columns)?;
    let val_out = apply(FunctionKind::Terminal, &params, &[], &val.columns)?;
    finish_node(
        id,
        FunctionKind::Terminal,
        Vec::new(),
        params,
        train_out,
        val_out,
        train,
        val,
    )
}

/// Builds node `id` applying `kind` to `args` (the argument nodes in order).
/// Classifier kinds with no arguments read the raw features.
pub fn make_node(
    id: NodeId,
    kind: FunctionKind,
    args: &[&Node],
    train: &Sample,
    val: &Sample,
    opts: &NodeOptions,
) -> Result<Outcome> {
    if kind == FunctionKind::Terminal {
        return Err(Error::Config("terminals are built by make_terminal".into()));
    }
    for (i, a) in args.iter().enumerate() {
        if a.id >= id {
            return Err(Error::Config(format!(
                "argument {} is not older than node {id}",
                a.id
            )));
        }
        if args[..i].iter().any(|b| b.id == a.id) {
            return Err(Error::Config(format!("argument {} repeated", a.id)));
        }
    }
    let train_args: Vec<&Semantics> = args.iter().map(|a| &a.train).collect();
    let val_args: Vec<&Semantics> = args.iter().map(|a| &a.val).collect();
    let Some(params) = fit_params(kind, &train_args, train, opts)? else {
        return Ok(Outcome::Discard(DiscardReason::FitFailed));
    };
    let train_out = apply(kind, &params, &train_args, &train.columns)?;
    let val_out = apply(kind, &params, &val_args, &val.columns)?;
    let arg_ids = args.iter().map(|a| a.id).collect();
    finish_node(id, kind, arg_ids, params, train_out, val_out, train, val)
}
