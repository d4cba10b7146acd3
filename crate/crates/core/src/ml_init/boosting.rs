//! Gradient-boosted regression trees (exact greedy splits on presorted
//! features).

use rand::seq::SliceRandom;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::fitted::{predict, FittedFunction};
use crate::loss::expit;
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoostingObjective {
    #[default]
    SquaredError,
    /// Binary outcome; the fit reports probabilities.
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStopping {
    /// Fraction of the sample held out to monitor the risk.
    pub holdout: f64,
    pub patience: usize,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        EarlyStopping { holdout: 0.2, patience: 25 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostingConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    pub seed: u64,
    pub min_leaf: usize,
    /// L2 penalty on leaf values.
    pub l2: f64,
    pub objective: BoostingObjective,
    /// When set, the number of trees is chosen on a holdout and the model is
    /// then refit on the full sample with that many trees.
    pub early_stopping: Option<EarlyStopping>,
}

impl Default for BoostingConfig {
    fn default() -> Self {
        BoostingConfig {
            n_trees: 500,
            max_depth: 4,
            learning_rate: 0.1,
            subsample: 0.8,
            seed: 0,
            min_leaf: 5,
            l2: 1.0,
            objective: BoostingObjective::SquaredError,
            early_stopping: Some(EarlyStopping::default()),
        }
    }
}

impl BoostingConfig {
    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::config("boosting needs n_trees >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("boosting learning_rate must be positive"));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::config("boosting subsample must lie in (0, 1]"));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::config("boosting l2 penalty must be nonnegative"));
        }
        if let Some(es) = &self.early_stopping {
            if !(es.holdout > 0.0 && es.holdout < 1.0) || es.patience == 0 {
                return Err(Error::config("early stopping needs holdout in (0,1) and patience >= 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Node {
    feature: usize,
    threshold: f64,
    /// Child indices; `usize::MAX` marks a leaf.
    left: usize,
    right: usize,
    value: f64,
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            let n = &self.nodes[k];
            if n.left == usize::MAX {
                return n.value;
            }
            k = if x[n.feature] <= n.threshold { n.left } else { n.right };
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoostingFit {
    base: f64,
    trees: Vec<Tree>,
    objective: BoostingObjective,
    range: Vec<(f64, f64)>,
    staged_risk: Vec<f64>,
}

impl BoostingFit {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Training risk after the base score and after each tree.
    pub fn staged_risk(&self) -> &[f64] {
        &self.staged_risk
    }

    /// Raw additive score (identity for squared error, logit otherwise).
    pub fn raw(&self, x: &[f64]) -> f64 {
        self.base + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

impl FittedFunction for BoostingFit {
    fn arity(&self) -> usize {
        1
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let r = self.raw(x);
        out[0] = match self.objective {
            BoostingObjective::SquaredError => r,
            BoostingObjective::Logistic => expit(r),
        };
    }

    fn fitted_range(&self) -> &[(f64, f64)] {
        &self.range
    }

    fn label(&self) -> String {
        format!("boosting({} trees)", self.trees.len())
    }
}

/// Fits a boosted tree ensemble; deterministic given `cfg.seed`.
pub fn fit_boosting(s: &Sample, cfg: &BoostingConfig) -> Result<BoostingFit> {
    cfg.validate()?;
    if cfg.objective == BoostingObjective::Logistic && s.z().iter().any(|&z| z != 0.0 && z != 1.0) {
        return Err(Error::data("logistic boosting needs a binary 0/1 outcome"));
    }
    let n_trees = match cfg.early_stopping {
        Some(es) if s.n() >= 10 => {
            let mut idx: Vec<usize> = (0..s.n()).collect();
            idx.shuffle(&mut rng_from_seed(derive_seed(cfg.seed, 0xE5)));
            let n_hold = ((s.n() as f64 * es.holdout).round() as usize).clamp(1, s.n() - 1);
            let (hold, train) = idx.split_at(n_hold);
            let tr = s.subset(train);
            let ho = s.subset(hold);
            let mut booster = Booster::new(&tr, cfg, Some(&ho));
            let mut best = (booster.holdout_risk(), 0usize);
            for t in 1..=cfg.n_trees {
                booster.add_tree();
                let r = booster.holdout_risk();
                if r < best.0 - 1e-12 * best.0.abs() {
                    best = (r, t);
                } else if t - best.1 >= es.patience {
                    break;
                }
            }
            best.1
        }
        _ => cfg.n_trees,
    };
    let mut booster = Booster::new(s, cfg, None);
    for _ in 0..n_trees {
        booster.add_tree();
    }
    Ok(booster.finish(s))
}

struct Booster<'a> {
    s: &'a Sample,
    cfg: &'a BoostingConfig,
    /// Row indices sorted by each feature.
    sorted: Vec<Vec<u32>>,
    raw: Vec<f64>,
    base: f64,
    trees: Vec<Tree>,
    staged: Vec<f64>,
    holdout: Option<(&'a Sample, Vec<f64>)>,
    rng: crate::rng::Rng64,
}

impl<'a> Booster<'a> {
    fn new(s: &'a Sample, cfg: &'a BoostingConfig, holdout: Option<&'a Sample>) -> Self {
        let n = s.n();
        let mean = s.z().iter().sum::<f64>() / n as f64;
        let base = match cfg.objective {
            BoostingObjective::SquaredError => mean,
            BoostingObjective::Logistic => {
                let p = mean.clamp(1e-6, 1.0 - 1e-6);
                (p / (1.0 - p)).ln()
            }
        };
        let sorted = (0..s.d())
            .map(|f| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| s.row(a as usize)[f].total_cmp(&s.row(b as usize)[f]));
                idx
            })
            .collect();
        let mut b = Booster {
            s,
            cfg,
            sorted,
            raw: vec![base; n],
            base,
            trees: Vec::new(),
            staged: Vec::new(),
            holdout: holdout.map(|h| (h, vec![base; h.n()])),
            rng: rng_from_seed(derive_seed(cfg.seed, 0xB0)),
        };
        b.staged.push(b.train_risk());
        b
    }

    fn risk_of(&self, z: &[f64], raw: &[f64]) -> f64 {
        let n = z.len() as f64;
        match self.cfg.objective {
            BoostingObjective::SquaredError => z.iter().zip(raw).map(|(z, r)| (z - r).powi(2)).sum::<f64>() / n,
            BoostingObjective::Logistic => {
                z.iter().zip(raw).map(|(z, r)| -z * r + crate::loss::softplus(*r)).sum::<f64>() / n
            }
        }
    }

    fn train_risk(&self) -> f64 {
        self.risk_of(self.s.z(), &self.raw)
    }

    fn holdout_risk(&self) -> f64 {
        let (h, raw) = self.holdout.as_ref().expect("holdout configured");
        self.risk_of(h.z(), raw)
    }

    /// Gradient and Hessian of the loss at the current raw scores.
    fn grad_hess(&self) -> (Vec<f64>, Vec<f64>) {
        let z = self.s.z();
        match self.cfg.objective {
            BoostingObjective::SquaredError => (self.raw.iter().zip(z).map(|(r, z)| r - z).collect(), vec![1.0; z.len()]),
            BoostingObjective::Logistic => {
                let p: Vec<f64> = self.raw.iter().map(|&r| expit(r)).collect();
                (
                    p.iter().zip(z).map(|(p, z)| p - z).collect(),
                    p.iter().map(|p| (p * (1.0 - p)).max(1e-12)).collect(),
                )
            }
        }
    }

    fn add_tree(&mut self) {
        let n = self.s.n();
        let (g, h) = self.grad_hess();
        let in_bag: Vec<bool> = if self.cfg.subsample < 1.0 {
            let m = ((n as f64 * self.cfg.subsample).round() as usize).clamp(1, n);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut self.rng);
            let mut bag = vec![false; n];
            for &i in &idx[..m] {
                bag[i] = true;
            }
            bag
        } else {
            vec![true; n]
        };
        let tree = grow_tree(self.s, &self.sorted, &g, &h, &in_bag, self.cfg);
        for i in 0..n {
            self.raw[i] += tree.predict(self.s.row(i));
        }
        if let Some((hs, raw)) = self.holdout.as_mut() {
            for (i, r) in raw.iter_mut().enumerate() {
                *r += tree.predict(hs.row(i));
            }
        }
        self.trees.push(tree);
        self.staged.push(self.train_risk());
    }

    fn finish(self, s: &Sample) -> BoostingFit {
        let mut fit = BoostingFit {
            base: self.base,
            trees: self.trees,
            objective: self.cfg.objective,
            range: vec![(0.0, 0.0)],
            staged_risk: self.staged,
        };
        fit.range = vec![crate::data::min_max(&predict(&fit, s))];
        fit
    }
}

/// Grows one tree level by level. Split structure is learned on the in-bag
/// rows; leaf values are Newton steps over every training row in the leaf,
/// which keeps the training risk nonincreasing from tree to tree.
fn grow_tree(s: &Sample, sorted: &[Vec<u32>], g: &[f64], h: &[f64], in_bag: &[bool], cfg: &BoostingConfig) -> Tree {
    let n = s.n();
    let mut nodes = vec![Node { feature: 0, threshold: 0.0, left: usize::MAX, right: usize::MAX, value: 0.0 }];
    let mut node_of: Vec<usize> = vec![0; n];
    let mut frontier: Vec<usize> = vec![0];
    let lambda = cfg.l2;

    for _depth in 0..cfg.max_depth {
        if frontier.is_empty() {
            break;
        }
        // slot of each frontier node, usize::MAX for finished nodes
        let mut slot = vec![usize::MAX; nodes.len()];
        for (k, &node) in frontier.iter().enumerate() {
            slot[node] = k;
        }
        let m = frontier.len();
        let mut tot_g = vec![0.0; m];
        let mut tot_h = vec![0.0; m];
        let mut tot_c = vec![0usize; m];
        for i in 0..n {
            let k = slot[node_of[i]];
            if k != usize::MAX && in_bag[i] {
                tot_g[k] += g[i];
                tot_h[k] += h[i];
                tot_c[k] += 1;
            }
        }
        // best split per frontier node: (gain, feature, threshold)
        let mut best: Vec<(f64, usize, f64)> = vec![(0.0, 0, 0.0); m];
        for (f, order) in sorted.iter().enumerate() {
            let mut lg = vec![0.0; m];
            let mut lh = vec![0.0; m];
            let mut lc = vec![0usize; m];
            let mut last = vec![f64::NAN; m];
            for &i in order {
                let i = i as usize;
                let k = slot[node_of[i]];
                if k == usize::MAX || !in_bag[i] {
                    continue;
                }
                let v = s.row(i)[f];
                if lc[k] >= cfg.min_leaf && tot_c[k] - lc[k] >= cfg.min_leaf && v > last[k] {
                    let (gl, hl) = (lg[k], lh[k]);
                    let (gr, hr) = (tot_g[k] - gl, tot_h[k] - hl);
                    let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda)
                        - tot_g[k] * tot_g[k] / (tot_h[k] + lambda);
                    if gain > best[k].0 + 1e-12 {
                        best[k] = (gain, f, 0.5 * (last[k] + v));
                    }
                }
                lg[k] += g[i];
                lh[k] += h[i];
                lc[k] += 1;
                last[k] = v;
            }
        }
        let mut next = Vec::new();
        for (k, &node) in frontier.iter().enumerate() {
            let (gain, f, thr) = best[k];
            if gain <= 0.0 {
                continue;
            }
            let l = nodes.len();
            nodes.push(Node { feature: 0, threshold: 0.0, left: usize::MAX, right: usize::MAX, value: 0.0 });
            nodes.push(Node { feature: 0, threshold: 0.0, left: usize::MAX, right: usize::MAX, value: 0.0 });
            nodes[node].feature = f;
            nodes[node].threshold = thr;
            nodes[node].left = l;
            nodes[node].right = l + 1;
            next.push(l);
            next.push(l + 1);
        }
        if next.is_empty() {
            break;
        }
        for i in 0..n {
            let nd = &nodes[node_of[i]];
            if nd.left != usize::MAX {
                node_of[i] = if s.row(i)[nd.feature] <= nd.threshold { nd.left } else { nd.right };
            }
        }
        frontier = next;
    }

    let mut sg = vec![0.0; nodes.len()];
    let mut sh = vec![0.0; nodes.len()];
    for i in 0..n {
        sg[node_of[i]] += g[i];
        sh[node_of[i]] += h[i];
    }
    for (k, node) in nodes.iter_mut().enumerate() {
        if node.left == usize::MAX && sh[k] > 0.0 {
            node.value = -cfg.learning_rate * sg[k] / (sh[k] + lambda);
        }
    }
    Tree { nodes }
}

pub(crate) const BOOSTING_MAGIC: &str = "plugeff-boosting 1";

impl BoostingObjective {
    pub fn name(self) -> &'static str {
        match self {
            BoostingObjective::SquaredError => "squared_error",
            BoostingObjective::Logistic => "logistic",
        }
    }

    pub fn from_name(s: &str) -> Result<BoostingObjective> {
        match s {
            "squared_error" => Ok(BoostingObjective::SquaredError),
            "logistic" => Ok(BoostingObjective::Logistic),
            other => Err(Error::config(format!("unknown boosting objective `{other}`"))),
        }
    }
}

impl BoostingFit {
    /// Leaves are written with child index `-1`.
    pub fn write_text<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let d = self.trees.iter().flat_map(|t| &t.nodes).filter(|n| n.left != usize::MAX).map(|n| n.feature + 1).max();
        writeln!(w, "{BOOSTING_MAGIC}")?;
        writeln!(w, "objective {}", self.objective.name())?;
        writeln!(w, "features {}", d.unwrap_or(1))?;
        writeln!(w, "base {:.16e}", self.base)?;
        writeln!(w, "range {:.16e} {:.16e}", self.range[0].0, self.range[0].1)?;
        write!(w, "staged_risk")?;
        for r in &self.staged_risk {
            write!(w, " {r:.16e}")?;
        }
        writeln!(w)?;
        writeln!(w, "trees {}", self.trees.len())?;
        for tree in &self.trees {
            writeln!(w, "tree {}", tree.nodes.len())?;
            for n in &tree.nodes {
                if n.left == usize::MAX {
                    writeln!(w, "node 0 0 -1 -1 {:.16e}", n.value)?;
                } else {
                    writeln!(w, "node {} {:.16e} {} {} {:.16e}", n.feature, n.threshold, n.left, n.right, n.value)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_text<R: std::io::BufRead>(r: R) -> Result<BoostingFit> {
        use crate::textio::{at, Records};
        let mut recs = Records::read(r, BOOSTING_MAGIC, "boosting fit")?;
        let obj = recs.expect("objective", Some(1))?;
        let objective = BoostingObjective::from_name(&obj.args()[0]).map_err(|e| at(obj.no, &e.to_string()))?;
        let d: usize = recs.expect("features", Some(1))?.num(0)?;
        let base: f64 = recs.expect("base", Some(1))?.num(0)?;
        let rg = recs.expect("range", Some(2))?;
        let staged_risk = recs.expect("staged_risk", None)?.nums()?;
        let n_trees: usize = recs.expect("trees", Some(1))?.num(0)?;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let head = recs.expect("tree", Some(1))?;
            let size: usize = head.num(0)?;
            if size == 0 {
                return Err(at(head.no, "a tree needs at least one node"));
            }
            let mut nodes = Vec::with_capacity(size);
            for k in 0..size {
                let rec = recs.expect("node", Some(5))?;
                let left: i64 = rec.num(2)?;
                let right: i64 = rec.num(3)?;
                let value: f64 = rec.num(4)?;
                if left < 0 || right < 0 {
                    if left != -1 || right != -1 {
                        return Err(at(rec.no, "a leaf marks both children with -1"));
                    }
                    nodes.push(Node { feature: 0, threshold: 0.0, left: usize::MAX, right: usize::MAX, value });
                    continue;
                }
                let (left, right) = (left as usize, right as usize);
                // children after their parent rules out cycles
                if left <= k || right <= k || left >= size || right >= size {
                    return Err(at(rec.no, "child index out of order or out of range"));
                }
                let feature: usize = rec.num(0)?;
                if feature >= d {
                    return Err(at(rec.no, &format!("split feature {feature} exceeds the declared {d} features")));
                }
                nodes.push(Node { feature, threshold: rec.num(1)?, left, right, value });
            }
            trees.push(Tree { nodes });
        }
        recs.finish()?;
        Ok(BoostingFit { base, trees, objective, range: vec![(rg.num(0)?, rg.num(1)?)], staged_risk })
    }
}
