//! Parent and negative selection.
//!
//! Scheme names follow `<parent>-<negative>[*][--<first>]`, e.g. `agr-rnd`,
//! `prs-fit*` or `ads-fit--fit`. A trailing `*` after the first-argument
//! part is also accepted.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::OvrTargets;
use crate::error::{Error, Result};
use crate::nodes::{FunctionKind, Node, NodeId};
use crate::semantics::{
    agreement, mean_abs_similarity, mean_relative_angle, novelty_score, Measure,
};

pub const DEFAULT_TOURNAMENT_SIZE: usize = 2;
pub const DEFAULT_NOVELTY_K: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParentScheme {
    Fit,
    Rnd,
    Sim,
    Prs,
    Agr,
    Ads,
    Nvs,
}

impl ParentScheme {
    const ALL: [ParentScheme; 7] = [
        ParentScheme::Fit,
        ParentScheme::Rnd,
        ParentScheme::Sim,
        ParentScheme::Prs,
        ParentScheme::Agr,
        ParentScheme::Ads,
        ParentScheme::Nvs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParentScheme::Fit => "fit",
            ParentScheme::Rnd => "rnd",
            ParentScheme::Sim => "sim",
            ParentScheme::Prs => "prs",
            ParentScheme::Agr => "agr",
            ParentScheme::Ads => "ads",
            ParentScheme::Nvs => "nvs",
        }
    }

    /// Schemes that anchor later arguments to the first one.
    pub fn is_anchored(self) -> bool {
        matches!(
            self,
            ParentScheme::Sim | ParentScheme::Prs | ParentScheme::Agr | ParentScheme::Ads
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeScheme {
    Fit,
    Rnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstArg {
    #[default]
    Rnd,
    Fit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub parent: ParentScheme,
    pub negative: NegativeScheme,
    pub first_arg: FirstArg,
    pub all_functions: bool,
    pub tournament_size: usize,
    pub novelty_k: usize,
}

impl SchemeConfig {
    pub fn new(parent: ParentScheme, negative: NegativeScheme) -> Self {
        Self {
            parent,
            negative,
            first_arg: FirstArg::Rnd,
            all_functions: false,
            tournament_size: DEFAULT_TOURNAMENT_SIZE,
            novelty_k: DEFAULT_NOVELTY_K,
        }
    }

    /// The scheme name without tournament or novelty settings.
    pub fn name(&self) -> String {
        self.to_string()
    }

    pub fn heuristic_set(&self) -> HeuristicFunctionSet {
        if self.all_functions {
            HeuristicFunctionSet::all_functions()
        } else {
            HeuristicFunctionSet::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tournament_size == 0 {
            return Err(Error::Config("tournament size must be positive".into()));
        }
        if self.novelty_k == 0 {
            return Err(Error::Config("novelty k must be positive".into()));
        }
        Ok(())
    }
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self::new(ParentScheme::Agr, NegativeScheme::Rnd)
    }
}

impl fmt::Display for SchemeConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let neg = match self.negative {
            NegativeScheme::Fit => "fit",
            NegativeScheme::Rnd => "rnd",
        };
        write!(f, "{}-{neg}", self.parent.name())?;
        if self.all_functions {
            f.write_str("*")?;
        }
        if self.first_arg == FirstArg::Fit {
            f.write_str("--fit")?;
        }
        Ok(())
    }
}

impl FromStr for SchemeConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Scheme(s.to_string());
        let lower = s.trim().to_ascii_lowercase();
        let (head, first) = match lower.split_once("--") {
            Some((h, f)) => (h.to_string(), Some(f.to_string())),
            None => (lower.clone(), None),
        };
        let mut star = false;
        let head = match head.strip_suffix('*') {
            Some(h) => {
                star = true;
                h.to_string()
            }
            None => head,
        };
        let first = match first {
            Some(f) => match f.strip_suffix('*') {
                Some(f) if !star => {
                    star = true;
                    Some(f.to_string())
                }
                Some(_) => return Err(bad()),
                None => Some(f),
            },
            None => None,
        };
        let (p, n) = head.split_once('-').ok_or_else(bad)?;
        let parent = ParentScheme::ALL
            .into_iter()
            .find(|x| x.name() == p)
            .ok_or_else(bad)?;
        let negative = match n {
            "fit" => NegativeScheme::Fit,
            "rnd" => NegativeScheme::Rnd,
            _ => return Err(bad()),
        };
        let first_arg = match first.as_deref() {
            None | Some("rnd") => FirstArg::Rnd,
            Some("fit") => FirstArg::Fit,
            Some(_) => return Err(bad()),
        };
        if (first.is_some() || star) && !parent.is_anchored() {
            return Err(bad());
        }
        Ok(Self {
            first_arg,
            all_functions: star,
            ..Self::new(parent, negative)
        })
    }
}

/// Function kinds whose arguments are chosen by the anchored heuristics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeuristicFunctionSet {
    pub kinds: BTreeSet<FunctionKind>,
}

impl Default for HeuristicFunctionSet {
    fn default() -> Self {
        use FunctionKind::*;
        Self {
            kinds: [Add, NbGauss, NbMultinomial, NearestCentroid].into(),
        }
    }
}

impl HeuristicFunctionSet {
    pub fn all_functions() -> Self {
        Self {
            kinds: FunctionKind::FUNCTIONS
                .into_iter()
                .filter(|k| k.default_arity() >= 2)
                .collect(),
        }
    }

    pub fn contains(&self, kind: FunctionKind) -> bool {
        self.kinds.contains(&kind)
    }
}

/// Read access to the live population. Selection reads fitness only through
/// [`Pool::fitness`].
pub trait Pool {
    fn live(&self) -> &[NodeId];
    fn node(&self, id: NodeId) -> &Node;
    fn fitness(&self, id: NodeId) -> f64 {
        self.node(id).fitness
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Best,
    Worst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Similarity {
    Cosine,
    Pearson,
    Agreement,
}

fn eligible<P: Pool + ?Sized>(pool: &P, exclude: &[NodeId]) -> Vec<NodeId> {
    pool.live()
        .iter()
        .copied()
        .filter(|id| !exclude.contains(id))
        .collect()
}

/// Up to `size` distinct ids drawn uniformly, in draw order.
fn draw<R: Rng + ?Sized>(ids: &[NodeId], size: usize, rng: &mut R) -> Result<Vec<NodeId>> {
    if ids.is_empty() {
        return Err(Error::Selection("no eligible individual".into()));
    }
    let amount = size.min(ids.len());
    Ok(sample(rng, ids.len(), amount)
        .into_iter()
        .map(|i| ids[i])
        .collect())
}

fn uniform<R: Rng + ?Sized>(ids: &[NodeId], rng: &mut R) -> Result<NodeId> {
    Ok(draw(ids, 1, rng)?[0])
}

fn fitness_winner<P: Pool + ?Sized>(
    pool: &P,
    candidates: &[NodeId],
    direction: Direction,
) -> NodeId {
    let mut best = candidates[0];
    let mut best_f = pool.fitness(best);
    for &c in &candidates[1..] {
        let f = pool.fitness(c);
        let better = match direction {
            Direction::Best => f > best_f,
            Direction::Worst => f < best_f,
        };
        if better || (f == best_f && c < best) {
            best = c;
            best_f = f;
        }
    }
    best
}

/// Tournament over distinct uniform candidates, compared by training fitness.
pub fn tournament_by_fitness<P: Pool + ?Sized, R: Rng + ?Sized>(
    pool: &P,
    size: usize,
    rng: &mut R,
    direction: Direction,
    exclude: &[NodeId],
) -> Result<NodeId> {
    let candidates = draw(&eligible(pool, exclude), size.max(1), rng)?;
    Ok(fitness_winner(pool, &candidates, direction))
}

pub fn select_first_argument<P: Pool + ?Sized, R: Rng + ?Sized>(
    pool: &P,
    cfg: &SchemeConfig,
    rng: &mut R,
) -> Result<NodeId> {
    match cfg.first_arg {
        FirstArg::Rnd => uniform(pool.live(), rng),
        FirstArg::Fit => {
            tournament_by_fitness(pool, cfg.tournament_size, rng, Direction::Best, &[])
        }
    }
}

/// Picks the best-scoring candidate. Candidates without a score lose; when
/// none has one the pick is uniform among them. Ties keep the first drawn.
fn scored_winner<R: Rng + ?Sized>(
    candidates: &[NodeId],
    scores: Vec<Option<f64>>,
    maximize: bool,
    rng: &mut R,
) -> NodeId {
    let mut best: Option<(NodeId, f64)> = None;
    for (&c, s) in candidates.iter().zip(scores) {
        let Some(s) = s else { continue };
        let better = match best {
            None => true,
            Some((_, b)) if maximize => s > b,
            Some((_, b)) => s < b,
        };
        if better {
            best = Some((c, s));
        }
    }
    match best {
        Some((c, _)) => c,
        None => candidates[rng.gen_range(0..candidates.len())],
    }
}

fn similarity_score(anchor: &Node, cand: &Node, measure: Similarity) -> Option<f64> {
    match measure {
        Similarity::Cosine => mean_abs_similarity(&anchor.train, &cand.train, Measure::Cosine).ok(),
        Similarity::Pearson => {
            mean_abs_similarity(&anchor.train, &cand.train, Measure::Pearson).ok()
        }
        Similarity::Agreement => agreement(&anchor.train_labels, &cand.train_labels).ok(),
    }
}

/// Tournament minimizing similarity to `anchor`.
pub fn select_argument_similarity<P: Pool + ?Sized, R: Rng + ?Sized>(
    pool: &P,
    anchor: &Node,
    measure: Similarity,
    cfg: &SchemeConfig,
    rng: &mut R,
    exclude: &[NodeId],
) -> Result<NodeId> {
    let candidates = draw(&eligible(pool, exclude), cfg.tournament_size, rng)?;
    let scores = candidates
        .iter()
        .map(|&c| similarity_score(anchor, pool.node(c), measure))
        .collect();
    Ok(scored_winner(&candidates, scores, false, rng))
}

/// Tournament maximizing the mean relative angle between error vectors.
pub fn select_argument_ads<P: Pool + ?Sized, R: Rng + ?Sized>(
    pool: &P,
    anchor: &Node,
    targets: &OvrTargets,
    cfg: &SchemeConfig,
    rng: &mut R,
    exclude: &[NodeId],
) -> Result<NodeId> {
    let candidates = draw(&eligible(pool, exclude), cfg.tournament_size, rng)?;
    let scores = candidates
        .iter()
        .map(|&c| mean_relative_angle(&targets.targets, &anchor.train, &pool.node(c).train).ok())
        .collect();
    Ok(scored_winner(&candidates, scores, true, rng))
}

/// Novelty of `id` against the rest of the live population.
pub fn population_novelty<P: Pool + ?Sized>(pool: &P, id: NodeId, k_nn: usize) -> Option<f64> {
    let b = &pool.node(id).behavior;
    let archive = pool
        .live()
        .iter()
        .filter(|&&o| o != id)
        .map(|&o| &pool.node(o).behavior);
    novelty_score(b, archive, k_nn).ok()
}

/// Tournament maximizing novelty.
pub fn select_argument_novelty<P: Pool + ?Sized, R: Rng + ?Sized>(
    pool: &P,
    cfg: &SchemeConfig,
    rng: &mut R,
    exclude: &[NodeId],
) -> Result<NodeId> {
    let candidates = draw(&eligible(pool, exclude), cfg.tournament_size, rng)?;
    let scores: Vec<Option<f64>> = candidates
        .iter()
        .map(|&c| population_novelty(pool, c, cfg.novelty_k))
        .collect();
    Ok(scored_winner(&candidates, scores, true, rng))
}

/// `arity` distinct argument ids for a new node applying `kind`.
pub fn select_arguments<P: Pool + ?Sized, R: Rng + ?Sized>(
    kind: FunctionKind,
    arity: usize,
    pool: &P,
    cfg: &SchemeConfig,
    targets: &OvrTargets,
    rng: &mut R,
) -> Result<Vec<NodeId>> {
    let live = pool.live();
    if live.len() < arity {
        return Err(Error::Selection(format!(
            "population of {} cannot supply {arity} distinct arguments",
            live.len()
        )));
    }
    if arity == 0 {
        return Ok(Vec::new());
    }
    let heuristic = cfg.parent.is_anchored() && cfg.heuristic_set().contains(kind);
    let mut chosen = Vec::with_capacity(arity);
    match cfg.parent {
        _ if heuristic => {
            let first = select_first_argument(pool, cfg, rng)?;
            chosen.push(first);
            let anchor = pool.node(first);
            while chosen.len() < arity {
                let next = match cfg.parent {
                    ParentScheme::Sim => select_argument_similarity(
                        pool,
                        anchor,
                        Similarity::Cosine,
                        cfg,
                        rng,
                        &chosen,
                    )?,
                    ParentScheme::Prs => select_argument_similarity(
                        pool,
                        anchor,
                        Similarity::Pearson,
                        cfg,
                        rng,
                        &chosen,
                    )?,
                    ParentScheme::Agr => select_argument_similarity(
                        pool,
                        anchor,
                        Similarity::Agreement,
                        cfg,
                        rng,
                        &chosen,
                    )?,
                    ParentScheme::Ads => {
                        select_argument_ads(pool, anchor, targets, cfg, rng, &chosen)?
                    }
                    _ => unreachable!(),
                };
                chosen.push(next);
            }
        }
        ParentScheme::Fit => {
            while chosen.len() < arity {
                let next = tournament_by_fitness(
                    pool,
                    cfg.tournament_size,
                    rng,
                    Direction::Best,
                    &chosen,
                )?;
                chosen.push(next);
            }
        }
        ParentScheme::Nvs => {
            while chosen.len() < arity {
                chosen.push(select_argument_novelty(pool, cfg, rng, &chosen)?);
            }
        }
        _ => chosen = draw(live, arity, rng)?,
    }
    Ok(chosen)
}

/// The live individual an offspring replaces.
pub fn negative_select<P: Pool + ?Sized, R: Rng + ?Sized>(
    pool: &P,
    cfg: &SchemeConfig,
    rng: &mut R,
) -> Result<NodeId> {
    match cfg.negative {
        NegativeScheme::Fit => {
            tournament_by_fitness(pool, cfg.tournament_size, rng, Direction::Worst, &[])
        }
        NegativeScheme::Rnd => uniform(pool.live(), rng),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::nodes::{NodeId, Params};
    use crate::semantics::{behavior_from_labels, Semantics};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::cell::Cell;
    use std::collections::HashMap;

    pub(crate) struct TestPool {
        pub nodes: HashMap<NodeId, Node>,
        pub live: Vec<NodeId>,
        pub fitness_reads: Cell<usize>,
    }

    impl Pool for TestPool {
        fn live(&self) -> &[NodeId] {
            &self.live
        }
        fn node(&self, id: NodeId) -> &Node {
            &self.nodes[&id]
        }
        fn fitness(&self, id: NodeId) -> f64 {
            self.fitness_reads.set(self.fitness_reads.get() + 1);
            self.nodes[&id].fitness
        }
    }

    pub(crate) fn node(id: NodeId, scores: Vec<Vec<f64>>, truth: &[usize], fitness: f64) -> Node {
        let train = Semantics::new(scores).unwrap();
        let labels = train.argmax();
        Node {
            id,
            kind: FunctionKind::Terminal,
            args: vec![],
            params: Params::Terminal {
                feature: 0,
                coef: vec![1.0; train.k()],
            },
            val: train.clone(),
            behavior: behavior_from_labels(&labels, truth).unwrap(),
            train_labels: labels,
            train,
            fitness,
            val_fitness: fitness,
        }
    }

    pub(crate) fn pool(nodes: Vec<Node>) -> TestPool {
        TestPool {
            live: nodes.iter().map(|n| n.id).collect(),
            nodes: nodes.into_iter().map(|n| (n.id, n)).collect(),
            fitness_reads: Cell::new(0),
        }
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn cfg(s: &str) -> SchemeConfig {
        s.parse().unwrap()
    }

    const TRUTH: [usize; 4] = [0, 0, 1, 1];

    fn flat(id: NodeId, f: f64) -> Node {
        node(id, vec![vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4]], &TRUTH, f)
    }

    #[test]
    fn scheme_names_round_trip() {
        for name in [
            "agr-rnd",
            "sim-fit*",
            "ads-rnd--rnd",
            "ads-fit--fit",
            "prs-fit*",
            "nvs-rnd",
            "fit-fit",
            "rnd-rnd",
            "agr-rnd--fit",
            "ads-rnd--rnd*",
            "ads-fit--fit*",
            "sim-rnd*",
        ] {
            let c = cfg(name);
            assert_eq!(cfg(&c.to_string()), c, "{name}");
        }
        assert_eq!(cfg("ads-rnd--rnd*"), cfg("ads-rnd*"));
        assert_eq!(cfg("agr-fit--fit").first_arg, FirstArg::Fit);
        assert!(cfg("prs-fit*").all_functions);
    }

    #[test]
    fn invalid_schemes_rejected() {
        for bad in [
            "xyz-abc",
            "agr",
            "agr-xyz",
            "fit-fit*",
            "nvs-rnd--fit",
            "agr-rnd--abc",
            "agr-rnd*--fit*",
        ] {
            assert!(bad.parse::<SchemeConfig>().is_err(), "{bad}");
        }
    }

    #[test]
    fn heuristic_sets() {
        let d = HeuristicFunctionSet::default();
        assert!(d.contains(FunctionKind::Add) && d.contains(FunctionKind::NearestCentroid));
        assert!(!d.contains(FunctionKind::Mul));
        let all = HeuristicFunctionSet::all_functions();
        assert!(all.contains(FunctionKind::Mul) && all.contains(FunctionKind::Hypot));
        assert!(!all.contains(FunctionKind::Sin));
    }

    #[test]
    fn fitness_tournament_directions() {
        let p = pool(vec![flat(0, 0.9), flat(1, 0.3)]);
        let mut r = rng(1);
        assert_eq!(
            tournament_by_fitness(&p, 2, &mut r, Direction::Best, &[]).unwrap(),
            0
        );
        assert_eq!(
            tournament_by_fitness(&p, 2, &mut r, Direction::Worst, &[]).unwrap(),
            1
        );
    }

    #[test]
    fn fitness_ties_go_to_older() {
        let p = pool(vec![flat(4, 0.5), flat(2, 0.5)]);
        let mut r = rng(3);
        for _ in 0..20 {
            assert_eq!(
                tournament_by_fitness(&p, 2, &mut r, Direction::Best, &[]).unwrap(),
                2
            );
        }
    }

    #[test]
    fn first_argument_modes() {
        let p = pool(vec![flat(0, 0.2)]);
        assert_eq!(
            select_first_argument(&p, &cfg("agr-rnd"), &mut rng(0)).unwrap(),
            0
        );
        let p = pool(vec![flat(0, 0.2), flat(1, 0.8)]);
        assert_eq!(
            select_first_argument(&p, &cfg("agr-rnd--fit"), &mut rng(0)).unwrap(),
            1
        );
    }

    #[test]
    fn cosine_prefers_orthogonal() {
        let anchor = node(
            0,
            vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]],
            &TRUTH,
            0.0,
        );
        let close = node(
            1,
            vec![vec![1.0, 0.1, 0.0, 0.0], vec![0.1, 1.0, 0.0, 0.0]],
            &TRUTH,
            0.0,
        );
        let far = node(
            2,
            vec![vec![0.0, 0.0, 1.0, 0.0], vec![0.0, 0.1, 0.0, 1.0]],
            &TRUTH,
            0.0,
        );
        let p = pool(vec![anchor.clone(), close, far]);
        let c = cfg("sim-rnd");
        for s in 0..10 {
            let got =
                select_argument_similarity(&p, &anchor, Similarity::Cosine, &c, &mut rng(s), &[0])
                    .unwrap();
            assert_eq!(got, 2);
        }
    }

    #[test]
    fn agreement_prefers_disagreeing_labels() {
        let anchor = node(
            0,
            vec![vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0]],
            &TRUTH,
            0.0,
        );
        let same = node(1, anchor.train.scores().to_vec(), &TRUTH, 0.0);
        let opposite = node(
            2,
            vec![vec![0.0, 0.0, 1.0, 1.0], vec![1.0, 1.0, 0.0, 0.0]],
            &TRUTH,
            0.0,
        );
        let p = pool(vec![anchor.clone(), same, opposite]);
        let got = select_argument_similarity(
            &p,
            &anchor,
            Similarity::Agreement,
            &cfg("agr-rnd"),
            &mut rng(0),
            &[0],
        )
        .unwrap();
        assert_eq!(got, 2);
    }

    #[test]
    fn forced_choice_when_exclude_covers_rest() {
        let p = pool(vec![flat(0, 0.0), flat(1, 0.0), flat(2, 0.0)]);
        let anchor = p.node(0).clone();
        let got = select_argument_similarity(
            &p,
            &anchor,
            Similarity::Cosine,
            &cfg("sim-rnd"),
            &mut rng(0),
            &[0, 2],
        )
        .unwrap();
        assert_eq!(got, 1);
        assert!(select_argument_similarity(
            &p,
            &anchor,
            Similarity::Cosine,
            &cfg("sim-rnd"),
            &mut rng(0),
            &[0, 1, 2]
        )
        .is_err());
    }

    #[test]
    fn undefined_similarity_loses() {
        let anchor = node(
            0,
            vec![vec![1.0, 2.0, 3.0, 4.0], vec![4.0, 3.0, 2.0, 1.0]],
            &TRUTH,
            0.0,
        );
        let zero = node(1, vec![vec![0.0; 4], vec![0.0; 4]], &TRUTH, 0.0);
        let same = node(2, anchor.train.scores().to_vec(), &TRUTH, 0.0);
        let p = pool(vec![anchor.clone(), zero, same]);
        for s in 0..10 {
            let got = select_argument_similarity(
                &p,
                &anchor,
                Similarity::Cosine,
                &cfg("sim-rnd"),
                &mut rng(s),
                &[0],
            )
            .unwrap();
            assert_eq!(got, 2);
        }
    }

    #[test]
    fn ads_prefers_wider_angle_and_degenerate_is_uniform() {
        let targets = OvrTargets::from_labels(&TRUTH, 2);
        let t = targets.targets.clone();
        // error of the anchor is along sample 0
        let mut a = t.clone();
        a[0][0] -= 1.0;
        a[1][0] -= 1.0;
        let mut narrow = t.clone();
        narrow[0][0] -= 1.0;
        narrow[0][1] -= 0.3;
        narrow[1][0] -= 1.0;
        narrow[1][1] -= 0.3;
        let mut wide = t.clone();
        wide[0][1] -= 1.0;
        wide[1][1] -= 1.0;
        let anchor = node(0, a, &TRUTH, 0.0);
        let p = pool(vec![
            anchor.clone(),
            node(1, narrow, &TRUTH, 0.0),
            node(2, wide, &TRUTH, 0.0),
        ]);
        let got =
            select_argument_ads(&p, &anchor, &targets, &cfg("ads-rnd"), &mut rng(0), &[0]).unwrap();
        assert_eq!(got, 2);

        let perfect = node(0, t.clone(), &TRUTH, 0.0);
        let p = pool(vec![
            perfect.clone(),
            node(1, t.clone(), &TRUTH, 0.0),
            node(2, t.clone(), &TRUTH, 0.0),
        ]);
        let mut seen = BTreeSet::new();
        for s in 0..40 {
            seen.insert(
                select_argument_ads(&p, &perfect, &targets, &cfg("ads-rnd"), &mut rng(s), &[0])
                    .unwrap(),
            );
        }
        assert_eq!(seen, [1, 2].into());
    }

    #[test]
    fn novelty_prefers_unique_behavior() {
        let common = vec![vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0]];
        let unique = vec![vec![0.0, 0.0, 1.0, 1.0], vec![1.0, 1.0, 0.0, 0.0]];
        let mut nodes: Vec<Node> = (0..6)
            .map(|i| node(i, common.clone(), &TRUTH, 0.0))
            .collect();
        nodes.push(node(6, unique, &TRUTH, 0.0));
        let p = pool(nodes);
        let c = SchemeConfig {
            tournament_size: 7,
            ..cfg("nvs-rnd")
        };
        assert_eq!(
            select_argument_novelty(&p, &c, &mut rng(0), &[]).unwrap(),
            6
        );
    }

    #[test]
    fn homogeneous_novelty_is_uniform() {
        let p = pool((0..5).map(|i| flat(i, 0.0)).collect());
        let mut seen = BTreeSet::new();
        for s in 0..60 {
            seen.insert(select_argument_novelty(&p, &cfg("nvs-rnd"), &mut rng(s), &[]).unwrap());
        }
        assert_eq!(seen.len(), 5);
    }

    #[test]
    fn select_arguments_distinct_and_forced_permutation() {
        let p = pool((0..3).map(|i| flat(i, i as f64 / 10.0)).collect());
        let targets = OvrTargets::from_labels(&TRUTH, 2);
        for scheme in [
            "agr-rnd",
            "fit-fit",
            "rnd-rnd",
            "nvs-rnd",
            "ads-rnd",
            "sim-fit--fit",
            "prs-rnd",
        ] {
            let mut ids = select_arguments(
                FunctionKind::Add,
                3,
                &p,
                &cfg(scheme),
                &targets,
                &mut rng(5),
            )
            .unwrap();
            ids.sort();
            assert_eq!(ids, [0, 1, 2], "{scheme}");
        }
        assert!(select_arguments(
            FunctionKind::Add,
            4,
            &p,
            &cfg("agr-rnd"),
            &targets,
            &mut rng(5)
        )
        .is_err());
    }

    #[test]
    fn anchored_heuristics_do_not_read_fitness() {
        let p = pool((0..10).map(|i| flat(i, i as f64 / 10.0)).collect());
        let targets = OvrTargets::from_labels(&TRUTH, 2);
        for scheme in ["rnd-rnd", "sim-rnd", "prs-rnd", "agr-rnd", "agr-rnd*"] {
            let mut r = rng(9);
            for kind in [FunctionKind::Add, FunctionKind::Sin, FunctionKind::Mul] {
                let arity = kind.default_arity().min(4);
                select_arguments(kind, arity, &p, &cfg(scheme), &targets, &mut r).unwrap();
            }
        }
        assert_eq!(p.fitness_reads.get(), 0);
        select_arguments(
            FunctionKind::Add,
            2,
            &p,
            &cfg("fit-rnd"),
            &targets,
            &mut rng(0),
        )
        .unwrap();
        assert!(p.fitness_reads.get() > 0);
    }

    #[test]
    fn negative_selection() {
        let p = pool(vec![flat(0, 0.9), flat(1, 0.2)]);
        assert_eq!(
            negative_select(&p, &cfg("agr-fit"), &mut rng(0)).unwrap(),
            1
        );
        let p = pool(vec![flat(3, 0.9)]);
        assert_eq!(
            negative_select(&p, &cfg("agr-fit"), &mut rng(0)).unwrap(),
            3
        );
        assert_eq!(
            negative_select(&p, &cfg("agr-rnd"), &mut rng(0)).unwrap(),
            3
        );
    }

    fn chi_square_uniform(counts: &[usize]) -> f64 {
        let total: usize = counts.iter().sum();
        let e = total as f64 / counts.len() as f64;
        counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
    }

    #[test]
    fn uniform_draws_pass_chi_square() {
        // 99.9% quantile of chi-square with 9 degrees of freedom
        const CRIT: f64 = 27.877;
        let p = pool((0..10).map(|i| flat(i, 0.5)).collect());
        let mut r = rng(2024);
        let mut first = vec![0usize; 10];
        let mut neg = vec![0usize; 10];
        for _ in 0..10_000 {
            first[select_first_argument(&p, &cfg("agr-rnd"), &mut r).unwrap()] += 1;
            neg[negative_select(&p, &cfg("agr-rnd"), &mut r).unwrap()] += 1;
        }
        assert!(chi_square_uniform(&first) < CRIT, "{first:?}");
        assert!(chi_square_uniform(&neg) < CRIT, "{neg:?}");
    }
}
