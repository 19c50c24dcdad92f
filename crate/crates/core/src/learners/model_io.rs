//! Flat text model files.
//!
//! A header line names the format and version, `key value` lines carry the
//! dimension and parameters, and the remaining lines carry the fitted
//! parameters. Floats are written in Rust's shortest round-trip form, so
//! reading a file back gives bit-identical values.

use std::str::FromStr;

use super::{ForestModel, ForestParams, LearnError, LogRegModel, Node, Tree};

const LOGREG_HEADER: &str = "vidcurate-logreg v1";
const FOREST_HEADER: &str = "vidcurate-forest v1";

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines { inner: text.lines().enumerate(), line: 0 }
    }

    fn err(&self, message: impl Into<String>) -> LearnError {
        LearnError::ModelFile { line: self.line, message: message.into() }
    }

    fn next_line(&mut self) -> Result<&'a str, LearnError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn value<T: FromStr>(&mut self, key: &str) -> Result<T, LearnError> {
        let line = self.next_line()?;
        let rest = line
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| self.err(format!("expected `{key} <value>`")))?;
        self.parse(rest)
    }

    fn parse<T: FromStr>(&self, s: &str) -> Result<T, LearnError> {
        s.trim().parse().map_err(|_| self.err(format!("cannot parse {s:?}")))
    }

    fn finish(&mut self) -> Result<(), LearnError> {
        for (i, l) in self.inner.by_ref() {
            if !l.trim().is_empty() {
                self.line = i + 1;
                return Err(self.err("trailing content"));
            }
        }
        Ok(())
    }
}

impl LogRegModel {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{LOGREG_HEADER}\ndimension {}\nl2_lambda {:?}\nconverged {}\niterations {}\ngradient_sup_norm {:?}\nbias {:?}\n",
            self.weights.len(),
            self.l2_lambda,
            self.converged,
            self.iterations,
            self.gradient_sup_norm,
            self.bias
        );
        for w in &self.weights {
            out.push_str(&format!("{w:?}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, LearnError> {
        let mut lines = Lines::new(text);
        if lines.next_line()? != LOGREG_HEADER {
            return Err(lines.err(format!("expected header {LOGREG_HEADER:?}")));
        }
        let dimension: usize = lines.value("dimension")?;
        let l2_lambda = lines.value("l2_lambda")?;
        let converged = lines.value("converged")?;
        let iterations = lines.value("iterations")?;
        let gradient_sup_norm = lines.value("gradient_sup_norm")?;
        let bias = lines.value("bias")?;
        let weights = (0..dimension)
            .map(|_| {
                let l = lines.next_line()?;
                lines.parse(l)
            })
            .collect::<Result<Vec<f64>, _>>()?;
        lines.finish()?;
        Ok(LogRegModel { weights, bias, l2_lambda, converged, iterations, gradient_sup_norm })
    }
}

impl ForestModel {
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mtry = p.mtry.map_or_else(|| "auto".to_string(), |m| m.to_string());
        let mut out = format!(
            "{FOREST_HEADER}\ndimension {}\nn_trees {}\nmax_depth {}\nmtry {mtry}\nmin_leaf {}\nseed {}\nbootstrap {}\n",
            self.dimension, p.n_trees, p.max_depth, p.min_leaf, p.seed, p.bootstrap
        );
        for tree in &self.trees {
            out.push_str(&format!("tree {}\n", tree.nodes.len()));
            for node in &tree.nodes {
                match node {
                    Node::Split { feature, threshold, left, right } => {
                        out.push_str(&format!("split {feature} {threshold:?} {left} {right}\n"))
                    }
                    Node::Leaf { p_neg, p_pos } => out.push_str(&format!("leaf {p_neg:?} {p_pos:?}\n")),
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, LearnError> {
        let mut lines = Lines::new(text);
        if lines.next_line()? != FOREST_HEADER {
            return Err(lines.err(format!("expected header {FOREST_HEADER:?}")));
        }
        let dimension: usize = lines.value("dimension")?;
        let n_trees: usize = lines.value("n_trees")?;
        let max_depth = lines.value("max_depth")?;
        let mtry: String = lines.value("mtry")?;
        let mtry = if mtry == "auto" { None } else { Some(lines.parse(&mtry)?) };
        let min_leaf = lines.value("min_leaf")?;
        let seed = lines.value("seed")?;
        let bootstrap = lines.value("bootstrap")?;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let n_nodes: usize = lines.value("tree")?;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                let line = lines.next_line()?;
                let fields: Vec<&str> = line.split(' ').collect();
                let node = match fields.as_slice() {
                    ["split", f, t, l, r] => {
                        let (feature, left, right): (usize, usize, usize) =
                            (lines.parse(f)?, lines.parse(l)?, lines.parse(r)?);
                        if feature >= dimension || left >= n_nodes || right >= n_nodes {
                            return Err(lines.err("node reference out of range"));
                        }
                        Node::Split { feature, threshold: lines.parse(t)?, left, right }
                    }
                    ["leaf", a, b] => Node::Leaf { p_neg: lines.parse(a)?, p_pos: lines.parse(b)? },
                    _ => return Err(lines.err("expected `split` or `leaf` node")),
                };
                nodes.push(node);
            }
            if nodes.is_empty() {
                return Err(lines.err("empty tree"));
            }
            trees.push(Tree { nodes });
        }
        lines.finish()?;
        if trees.is_empty() {
            return Err(lines.err("forest has no trees"));
        }
        Ok(ForestModel {
            dimension,
            params: ForestParams { n_trees, max_depth, mtry, min_leaf, seed, bootstrap },
            trees,
        })
    }
}
