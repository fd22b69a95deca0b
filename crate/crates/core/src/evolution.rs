//! Steady-state evolution of a node population and the frozen models it
//! produces.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_indices, Dataset};
use crate::error::{Error, Result};
use crate::nodes::{
    apply, default_function_set, make_node, make_terminal, Function, FunctionKind, Node, NodeId,
    NodeOptions, Outcome, Params, Sample,
};
use crate::selection::{negative_select, select_arguments, Pool, SchemeConfig};
use crate::semantics::Semantics;

pub const DEFAULT_POPULATION: usize = 4000;
pub const DEFAULT_EARLY_STOP: usize = 4000;
/// Attempts per population slot before initialization gives up.
pub const INIT_ATTEMPTS_PER_SLOT: usize = 100;
/// Internal re-split attempts when a class is missing from the training half.
pub const SPLIT_ATTEMPTS: u64 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveConfig {
    pub population_size: usize,
    /// Evaluations without a strict validation improvement before stopping.
    pub early_stop: usize,
    pub scheme: SchemeConfig,
    pub seed: u64,
    pub function_set: Vec<Function>,
    pub node_options: NodeOptions,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            population_size: DEFAULT_POPULATION,
            early_stop: DEFAULT_EARLY_STOP,
            scheme: SchemeConfig::default(),
            seed: 0,
            function_set: default_function_set(),
            node_options: NodeOptions::default(),
        }
    }
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        if self.population_size < 3 {
            return Err(Error::Config("population size must be at least 3".into()));
        }
        if self.early_stop == 0 {
            return Err(Error::Config("early stop must be positive".into()));
        }
        if self.function_set.is_empty() {
            return Err(Error::Config("function set is empty".into()));
        }
        if let Some(f) = self
            .function_set
            .iter()
            .find(|f| f.kind == FunctionKind::Terminal || f.arity == 0)
        {
            return Err(Error::Config(format!(
                "{} is not a usable function",
                f.kind
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Created { id: NodeId, improved: bool },
    Discarded,
}

/// Every node still reachable from the live set or the best-validation node.
/// Unreachable nodes are dropped as soon as their last reference goes away.
#[derive(Debug)]
pub struct Population {
    store: Vec<Option<Node>>,
    refs: Vec<u32>,
    live: Vec<NodeId>,
    capacity: usize,
    best_val: Option<NodeId>,
    train: Sample,
    val: Sample,
    created: usize,
}

impl Pool for Population {
    fn live(&self) -> &[NodeId] {
        &self.live
    }

    fn node(&self, id: NodeId) -> &Node {
        self.store[id].as_ref().expect("live or referenced node")
    }
}

impl Population {
    fn empty(train: Sample, val: Sample, capacity: usize) -> Self {
        Self {
            store: Vec::new(),
            refs: Vec::new(),
            live: Vec::new(),
            capacity,
            best_val: None,
            train,
            val,
            created: 0,
        }
    }

    pub fn next_id(&self) -> NodeId {
        self.store.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn best_val(&self) -> NodeId {
        self.best_val.expect("initialized population")
    }

    pub fn best(&self) -> &Node {
        self.node(self.best_val())
    }

    pub fn train(&self) -> &Sample {
        &self.train
    }

    pub fn val(&self) -> &Sample {
        &self.val
    }

    pub fn get(&self, id: NodeId) -> Option<&Node> {
        self.store.get(id).and_then(Option::as_ref)
    }

    /// Nodes currently held in the store.
    pub fn stored(&self) -> usize {
        self.store.iter().filter(|n| n.is_some()).count()
    }

    /// Nodes created since the population was started, including removed ones.
    pub fn created(&self) -> usize {
        self.created
    }

    fn insert(&mut self, node: Node) -> bool {
        debug_assert_eq!(node.id, self.store.len());
        for &a in &node.args {
            self.refs[a] += 1;
        }
        let id = node.id;
        let improved = match self.best_val {
            None => true,
            Some(b) => node.val_fitness > self.node(b).val_fitness,
        };
        self.store.push(Some(node));
        self.refs.push(0);
        self.created += 1;
        if improved {
            let old = self.best_val.replace(id);
            self.refs[id] += 1;
            if let Some(old) = old {
                self.release(old);
            }
        }
        improved
    }

    fn release(&mut self, id: NodeId) {
        let mut stack = vec![id];
        while let Some(id) = stack.pop() {
            self.refs[id] -= 1;
            if self.refs[id] == 0 {
                let node = self.store[id].take().expect("released node exists");
                stack.extend(node.args);
            }
        }
    }

    /// Checks the steady-state and DAG invariants.
    pub fn check_integrity(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Training(m));
        if self.live.len() != self.capacity {
            return fail(format!(
                "live size {} != {}",
                self.live.len(),
                self.capacity
            ));
        }
        let mut seen = vec![false; self.store.len()];
        for &id in &self.live {
            if self.get(id).is_none() {
                return fail(format!("live node {id} missing"));
            }
            if std::mem::replace(&mut seen[id], true) {
                return fail(format!("live node {id} repeated"));
            }
        }
        if self.best_val.and_then(|b| self.get(b)).is_none() {
            return fail("best validation node missing".into());
        }
        for node in self.store.iter().flatten() {
            for &a in &node.args {
                if a >= node.id || self.get(a).is_none() {
                    return fail(format!("node {} has dangling argument {a}", node.id));
                }
            }
            if !node.train.is_finite() || !node.val.is_finite() || !node.params.is_finite() {
                return fail(format!("node {} is not finite", node.id));
            }
        }
        Ok(())
    }
}

/// Seeds the population with the scaled features and the three classifiers
/// over the raw features, then fills it with random nodes.
pub fn init_population<R: Rng + ?Sized>(
    train: Sample,
    val: Sample,
    cfg: &EvolveConfig,
    rng: &mut R,
) -> Result<Population> {
    cfg.validate()?;
    if train.m() == 0 || train.is_empty() || val.is_empty() {
        return Err(Error::InvalidDataset(
            "evolution needs features and non-empty halves".into(),
        ));
    }
    if train.m() != val.m() {
        return Err(Error::ColumnMismatch {
            expected: train.m(),
            actual: val.m(),
        });
    }
    let mut pop = Population::empty(train, val, cfg.population_size);
    for j in 0..pop.train.m() {
        let out = make_terminal(pop.next_id(), j, &pop.train, &pop.val)?;
        add_seed(&mut pop, out);
    }
    for kind in [
        FunctionKind::NbGauss,
        FunctionKind::NbMultinomial,
        FunctionKind::NearestCentroid,
    ] {
        let out = make_node(
            pop.next_id(),
            kind,
            &[],
            &pop.train,
            &pop.val,
            &cfg.node_options,
        )?;
        add_seed(&mut pop, out);
    }
    if pop.live.is_empty() {
        return Err(Error::Initialization {
            attempts: 0,
            live: 0,
            target: cfg.population_size,
        });
    }
    pop.capacity = pop.capacity.max(pop.live.len());

    let budget = INIT_ATTEMPTS_PER_SLOT * pop.capacity;
    let mut attempts = 0;
    while pop.live.len() < pop.capacity {
        if attempts >= budget {
            return Err(Error::Initialization {
                attempts,
                live: pop.live.len(),
                target: pop.capacity,
            });
        }
        attempts += 1;
        let f = cfg.function_set[rng.gen_range(0..cfg.function_set.len())];
        let Some(arity) = f.effective_arity(pop.live.len()) else {
            continue;
        };
        let args: Vec<NodeId> = sample(rng, pop.live.len(), arity)
            .into_iter()
            .map(|i| pop.live[i])
            .collect();
        if let Some(node) = build(&pop, f.kind, &args, &cfg.node_options)?.node() {
            let id = node.id;
            pop.insert(node);
            pop.refs[id] += 1;
            pop.live.push(id);
        }
    }
    Ok(pop)
}

fn add_seed(pop: &mut Population, out: Outcome) {
    if let Some(node) = out.node() {
        let id = node.id;
        pop.insert(node);
        pop.refs[id] += 1;
        pop.live.push(id);
    }
}

fn build(
    pop: &Population,
    kind: FunctionKind,
    args: &[NodeId],
    opts: &NodeOptions,
) -> Result<Outcome> {
    let arg_nodes: Vec<&Node> = args.iter().map(|&a| pop.node(a)).collect();
    make_node(pop.next_id(), kind, &arg_nodes, &pop.train, &pop.val, opts)
}

/// One steady-state step: select, build, replace.
pub fn evolve_step<R: Rng + ?Sized>(
    pop: &mut Population,
    cfg: &EvolveConfig,
    rng: &mut R,
) -> Result<StepOutcome> {
    let f = cfg.function_set[rng.gen_range(0..cfg.function_set.len())];
    let Some(arity) = f.effective_arity(pop.live.len()) else {
        return Ok(StepOutcome::Discarded);
    };
    let args = select_arguments(f.kind, arity, pop, &cfg.scheme, &pop.train.targets, rng)?;
    let Some(node) = build(pop, f.kind, &args, &cfg.node_options)?.node() else {
        return Ok(StepOutcome::Discarded);
    };
    let victim = negative_select(pop, &cfg.scheme, rng)?;
    let slot = pop
        .live
        .iter()
        .position(|&id| id == victim)
        .expect("victim is live");
    let id = node.id;
    let improved = pop.insert(node);
    pop.refs[id] += 1;
    pop.live[slot] = id;
    pop.release(victim);
    Ok(StepOutcome::Created { id, improved })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunStats {
    /// Offspring evaluations after initialization, discards included.
    pub evaluations: usize,
    pub discarded: usize,
    pub nodes_created: usize,
}

/// Runs until `early_stop` consecutive evaluations bring no strict validation
/// improvement.
pub fn run<R: Rng + ?Sized>(
    train: Sample,
    val: Sample,
    cfg: &EvolveConfig,
    rng: &mut R,
    class_names: &[String],
) -> Result<(Model, RunStats)> {
    let mut pop = init_population(train, val, cfg, rng)?;
    let mut stats = RunStats::default();
    let mut stale = 0;
    while stale < cfg.early_stop {
        stats.evaluations += 1;
        match evolve_step(&mut pop, cfg, rng)? {
            StepOutcome::Created { improved: true, .. } => stale = 0,
            StepOutcome::Created { .. } => stale += 1,
            StepOutcome::Discarded => {
                stats.discarded += 1;
                stale += 1;
            }
        }
    }
    stats.nodes_created = pop.created();
    let mut model = extract_model(&pop, class_names);
    model.seed = cfg.seed;
    Ok((model, stats))
}

/// Evolves on a given split; the RNG stream is seeded with `cfg.seed`.
pub fn evolve_with_split(
    train: &Dataset,
    val: &Dataset,
    cfg: &EvolveConfig,
) -> Result<(Model, RunStats)> {
    if train.k() != val.k() || train.m() != val.m() {
        return Err(Error::InvalidDataset("halves disagree on k or m".into()));
    }
    train.require_all_classes()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    run(
        Sample::from_dataset(train),
        Sample::from_dataset(val),
        cfg,
        &mut rng,
        train.class_names(),
    )
}

/// Splits `ds` in halves and evolves. A half missing a class is re-drawn
/// with the next seed.
pub fn evolve(ds: &Dataset, cfg: &EvolveConfig) -> Result<Model> {
    Ok(evolve_stats(ds, cfg)?.0)
}

pub fn evolve_stats(ds: &Dataset, cfg: &EvolveConfig) -> Result<(Model, RunStats)> {
    ds.require_all_classes()?;
    if ds.n() < 4 {
        return Err(Error::InvalidDataset(
            "evolution needs at least 4 rows".into(),
        ));
    }
    for attempt in 0..SPLIT_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(attempt));
        let (a, b) = split_indices(ds.n(), ds.n() / 2, &mut rng);
        let train = ds.subset(&a);
        if train.require_all_classes().is_err() {
            continue;
        }
        let val = ds.subset(&b);
        return run(
            Sample::from_dataset(&train),
            Sample::from_dataset(&val),
            cfg,
            &mut rng,
            ds.class_names(),
        );
    }
    Err(Error::Split(format!(
        "no half of {} contained every class after {SPLIT_ATTEMPTS} attempts",
        ds.name()
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelNode {
    pub id: NodeId,
    pub kind: FunctionKind,
    pub args: Vec<NodeId>,
    pub params: Params,
}

/// The sub-DAG under the best validation node, in id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub nodes: Vec<ModelNode>,
    pub output: NodeId,
    pub val_fitness: f64,
    pub seed: u64,
    #[serde(skip)]
    pub class_names: Vec<String>,
    #[serde(skip)]
    pub m: usize,
}

pub fn extract_model(pop: &Population, class_names: &[String]) -> Model {
    let best = pop.best();
    let mut keep = vec![false; pop.next_id()];
    let mut stack = vec![best.id];
    while let Some(id) = stack.pop() {
        if !std::mem::replace(&mut keep[id], true) {
            stack.extend(pop.node(id).args.iter().copied());
        }
    }
    let nodes = keep
        .iter()
        .enumerate()
        .filter(|(_, &k)| k)
        .map(|(id, _)| {
            let n = pop.node(id);
            ModelNode {
                id,
                kind: n.kind,
                args: n.args.clone(),
                params: n.params.clone(),
            }
        })
        .collect();
    Model {
        nodes,
        output: best.id,
        val_fitness: best.val_fitness,
        seed: 0,
        class_names: class_names.to_vec(),
        m: pop.train.m(),
    }
}

impl Model {
    pub fn k(&self) -> usize {
        self.class_names.len()
    }

    /// Checks ordering, argument closure and the output reference.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ModelFormat(m));
        for (i, node) in self.nodes.iter().enumerate() {
            if i > 0 && self.nodes[i - 1].id >= node.id {
                return bad(format!("node ids not increasing at {}", node.id));
            }
            for a in &node.args {
                if *a >= node.id || self.nodes[..i].binary_search_by_key(a, |n| n.id).is_err() {
                    return bad(format!("node {} references unknown argument {a}", node.id));
                }
            }
            if !node.params.is_finite() {
                return bad(format!("node {} has non-finite parameters", node.id));
            }
            if let Params::Terminal { feature, .. } = node.params {
                if feature >= self.m {
                    return bad(format!(
                        "node {} reads feature {feature} of {}",
                        node.id, self.m
                    ));
                }
            }
        }
        match self.nodes.last() {
            Some(last) if last.id == self.output => Ok(()),
            _ => bad(format!("output {} is not the last node", self.output)),
        }
    }

    /// Class scores for column-major features. Non-finite intermediate values
    /// are set to 0.
    pub fn decision_columns(&self, columns: &[Vec<f64>]) -> Result<Semantics> {
        if columns.len() != self.m {
            return Err(Error::ColumnMismatch {
                expected: self.m,
                actual: columns.len(),
            });
        }
        let mut outputs: Vec<(NodeId, Semantics)> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let args: Vec<&Semantics> = node
                .args
                .iter()
                .map(|a| {
                    let i = outputs
                        .binary_search_by_key(a, |(id, _)| *id)
                        .expect("validated");
                    &outputs[i].1
                })
                .collect();
            let raw = apply(node.kind, &node.params, &args, columns)?;
            let mut s = Semantics::from_raw(raw)?;
            s.zero_non_finite();
            outputs.push((node.id, s));
        }
        Ok(outputs.pop().expect("non-empty model").1)
    }

    /// Class scores for row-major features.
    pub fn decision_function(&self, rows: &[Vec<f64>]) -> Result<Semantics> {
        self.decision_columns(&to_columns(rows, self.m)?)
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<(Semantics, Vec<usize>)> {
        let s = self.decision_function(rows)?;
        let labels = s.argmax();
        Ok((s, labels))
    }
}

/// Transposes rows into columns; every row must have `m` entries.
pub fn to_columns(rows: &[Vec<f64>], m: usize) -> Result<Vec<Vec<f64>>> {
    let mut cols = vec![Vec::with_capacity(rows.len()); m];
    for row in rows {
        if row.len() != m {
            return Err(Error::ColumnMismatch {
                expected: m,
                actual: row.len(),
            });
        }
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(*v);
        }
    }
    Ok(cols)
}

/// Predicts with a model.
pub fn predict(model: &Model, rows: &[Vec<f64>]) -> Result<(Semantics, Vec<usize>)> {
    model.predict(rows)
}
