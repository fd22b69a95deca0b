use std::collections::VecDeque;

use super::{emit, InspectArgs};
use crate::dataset::{class_entropy, load_csv};
use crate::ensemble::EnsembleModel;
use crate::error::{Error, Result};
use crate::evolution::Model;
use crate::nodes::{FunctionKind, Params};

pub fn dataset_summary(n: usize, m: usize, k: usize, entropy: f64) -> String {
    format!("n={n} m={m} k={k} entropy={entropy:.2}")
}

fn node_label(kind: FunctionKind, params: &Params) -> String {
    match params {
        Params::Terminal { feature, .. } => format!("x{feature}"),
        Params::Classifier(_) if kind.is_classifier() => kind.name().to_uppercase(),
        _ => kind.name().to_string(),
    }
}

/// Kahn's algorithm over the argument edges.
pub fn is_acyclic(model: &Model) -> bool {
    let n = model.nodes.len();
    let index = |id: usize| model.nodes.iter().position(|x| x.id == id);
    let mut indegree = vec![0usize; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, node) in model.nodes.iter().enumerate() {
        for &a in &node.args {
            let Some(j) = index(a) else { return false };
            indegree[i] += 1;
            children[j].push(i);
        }
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut seen = 0;
    while let Some(i) = queue.pop_front() {
        seen += 1;
        for &c in &children[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                queue.push_back(c);
            }
        }
    }
    seen == n
}

/// DOT text for the chosen bags; edges run from arguments to the node that
/// consumes them.
pub fn model_dot(em: &EnsembleModel, bag: Option<usize>) -> Result<String> {
    let chosen: Vec<usize> = match bag {
        Some(b) if b < em.models.len() => vec![b],
        Some(b) => {
            return Err(Error::Config(format!(
                "bag {b} out of range for {} models",
                em.models.len()
            )))
        }
        None => (0..em.models.len()).collect(),
    };
    let mut out = String::from("digraph model {\n  rankdir=BT;\n");
    for &b in &chosen {
        let model = &em.models[b];
        if !is_acyclic(model) {
            return Err(Error::ModelFormat(format!("bag {b} is not acyclic")));
        }
        let indent = if chosen.len() > 1 {
            out.push_str(&format!(
                "  subgraph cluster_{b} {{\n    label=\"bag {b} val_f1={:.4}\";\n",
                model.val_fitness
            ));
            "    "
        } else {
            "  "
        };
        for node in &model.nodes {
            let shape = if node.id == model.output {
                ", shape=doublecircle"
            } else {
                ""
            };
            out.push_str(&format!(
                "{indent}b{b}_n{} [label=\"{}\"{shape}];\n",
                node.id,
                node_label(node.kind, &node.params)
            ));
        }
        for node in &model.nodes {
            for a in &node.args {
                out.push_str(&format!("{indent}b{b}_n{a} -> b{b}_n{};\n", node.id));
            }
        }
        if chosen.len() > 1 {
            out.push_str("  }\n");
        }
    }
    out.push_str("}\n");
    Ok(out)
}

pub fn cmd_inspect(a: &InspectArgs) -> Result<()> {
    if let Some(path) = &a.data {
        let ds = load_csv(path, &a.data_args.load_options())?;
        let line = dataset_summary(ds.n(), ds.m(), ds.k(), class_entropy(&ds));
        return emit(a.out.as_deref(), &format!("{line}\n"));
    }
    let path = a
        .model
        .as_ref()
        .ok_or_else(|| Error::Config("need --data or --model".into()))?;
    let em = EnsembleModel::load(path)?;
    emit(a.out.as_deref(), &model_dot(&em, a.bag)?)
}
