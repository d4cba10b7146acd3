use std::f64::consts::PI;
use std::fmt;

use crate::data::{min_max, Sample};
use crate::error::{Error, Result};
use crate::fitted::SharedFit;

/// Affine map of `[lo, hi]` onto `[-1/2, 1/2]`; values outside the interval
/// are mapped by the same affine formula, never clipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeTransform {
    lo: f64,
    hi: f64,
}

impl RangeTransform {
    /// Relative padding applied to each side of a fitted range.
    pub const PAD: f64 = 0.01;

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::config("range transform endpoints must be finite"));
        }
        if !(hi > lo) {
            return Err(Error::config(format!(
                "degenerate range [{lo}, {hi}]: the initial fit is constant; use a constant fit instead of a series"
            )));
        }
        Ok(RangeTransform { lo, hi })
    }

    /// `[lo, hi]` widened by 1% of its length on each side.
    pub fn padded(lo: f64, hi: f64) -> Result<Self> {
        RangeTransform::new(lo, hi)?;
        let pad = Self::PAD * (hi - lo);
        RangeTransform::new(lo - pad, hi + pad)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo) - 0.5
    }
}

/// Univariate trigonometric ladder on `u`: index 0 is the constant,
/// `2j - 1` is `sin(j pi u)` and `2j` is `cos(j pi u)`.
#[inline]
pub fn trig_term(m: usize, u: f64) -> f64 {
    if m == 0 {
        1.0
    } else {
        let j = m.div_ceil(2) as f64;
        if m % 2 == 1 {
            (j * PI * u).sin()
        } else {
            (j * PI * u).cos()
        }
    }
}

/// Frequency `j` of ladder index `m`.
#[inline]
pub fn trig_frequency(m: usize) -> usize {
    m.div_ceil(2)
}

fn trig_ladder_into(u: f64, top: usize, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    let mut j = 1.0;
    while out.len() <= top {
        let (s, c) = (j * PI * u).sin_cos();
        out.push(s);
        if out.len() <= top {
            out.push(c);
        }
        j += 1.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    /// `{1, sin(pi u), cos(pi u), sin(2 pi u), ..}` with `u` the rescaled
    /// initial fit; `K` non-constant terms.
    TrigComposed,
    /// Products of univariate trig terms in the rescaled initial fit(s) and
    /// in each rescaled covariate.
    TrigTensorGeneralized,
    /// The two columns `{theta_n^0, Psi_dot_n}`.
    TargetedSpan,
}

impl SeriesKind {
    pub fn name(self) -> &'static str {
        match self {
            SeriesKind::TrigComposed => "trig",
            SeriesKind::TrigTensorGeneralized => "trig_tensor",
            SeriesKind::TargetedSpan => "targeted",
        }
    }

    pub fn from_name(s: &str) -> Result<SeriesKind> {
        match s {
            "trig" | "trig_composed" => Ok(SeriesKind::TrigComposed),
            "trig_tensor" | "tensor" => Ok(SeriesKind::TrigTensorGeneralized),
            "targeted" | "targeted_span" => Ok(SeriesKind::TargetedSpan),
            other => Err(Error::config(format!("unknown series kind `{other}` (expected trig, trig_tensor, targeted)"))),
        }
    }
}

/// Column ordering for the generalized tensor span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TensorLayout {
    /// Multi-indices ordered by total frequency, then lexicographically;
    /// the first `K + 1` (constant included) are kept.
    #[default]
    TotalDegree,
    /// Full tensor product: ladder indices `0..=k_u` for each initial-fit
    /// coordinate and `0..=k_x` for each covariate. `K` is ignored.
    Full { k_u: usize, k_x: usize },
}

/// A data-adaptive span built on an initial fit.
#[derive(Clone)]
pub struct SeriesSpace {
    pub(crate) kind: SeriesKind,
    pub(crate) k: usize,
    pub(crate) init: SharedFit,
    pub(crate) gradient: Option<SharedFit>,
    pub(crate) init_transforms: Vec<RangeTransform>,
    pub(crate) x_transforms: Vec<RangeTransform>,
    pub(crate) layout: TensorLayout,
    /// Multi-indices over `(u_1..u_q, x_1..x_d)` for tensor spans.
    pub(crate) tensor_terms: Vec<Vec<u16>>,
}

impl fmt::Debug for SeriesSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SeriesSpace")
            .field("kind", &self.kind)
            .field("k", &self.k)
            .field("init", &self.init.label())
            .field("init_transforms", &self.init_transforms)
            .field("x_transforms", &self.x_transforms)
            .finish()
    }
}

impl SeriesSpace {
    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn init(&self) -> &SharedFit {
        &self.init
    }

    pub fn gradient(&self) -> Option<&SharedFit> {
        self.gradient.as_ref()
    }

    pub fn init_transforms(&self) -> &[RangeTransform] {
        &self.init_transforms
    }

    pub fn x_transforms(&self) -> &[RangeTransform] {
        &self.x_transforms
    }

    pub fn layout(&self) -> TensorLayout {
        self.layout
    }

    /// Tensor multi-indices (empty for other kinds).
    pub fn tensor_terms(&self) -> &[Vec<u16>] {
        &self.tensor_terms
    }

    /// Output dimension of fits in this space.
    pub fn arity(&self) -> usize {
        self.init.arity()
    }

    /// Number of columns used by each output component.
    pub fn n_columns(&self) -> usize {
        match self.kind {
            SeriesKind::TrigComposed => self.k + 1,
            SeriesKind::TrigTensorGeneralized => self.tensor_terms.len(),
            SeriesKind::TargetedSpan => 2,
        }
    }

    /// Same space with a smaller `K`; columns are a prefix of the original.
    pub fn truncated(&self, k: usize) -> Result<SeriesSpace> {
        match self.kind {
            SeriesKind::TargetedSpan => Ok(self.clone()),
            SeriesKind::TrigComposed => {
                let mut s = self.clone();
                s.k = k;
                Ok(s)
            }
            SeriesKind::TrigTensorGeneralized => {
                if let TensorLayout::Full { .. } = self.layout {
                    return Err(Error::config("full tensor layouts are not nested in K"));
                }
                if k + 1 > self.tensor_terms.len() {
                    return Err(Error::config("cannot truncate a tensor span to a larger K"));
                }
                let mut s = self.clone();
                s.k = k;
                s.tensor_terms.truncate(k + 1);
                Ok(s)
            }
        }
    }

    /// Column values for output component `comp` at covariate row `x`.
    pub fn columns_into(&self, comp: usize, x: &[f64], out: &mut Vec<f64>) {
        let init = self.init.eval(x);
        self.columns_from_init(comp, x, &init, out);
    }

    /// Like [`columns_into`](Self::columns_into) with precomputed initial-fit outputs.
    pub fn columns_from_init(&self, comp: usize, x: &[f64], init: &[f64], out: &mut Vec<f64>) {
        match self.kind {
            SeriesKind::TrigComposed => {
                let u = self.init_transforms[comp].apply(init[comp]);
                trig_ladder_into(u, self.k, out);
            }
            SeriesKind::TargetedSpan => {
                out.clear();
                out.push(init[comp]);
                let g = self.gradient.as_ref().expect("targeted span has a gradient fit").eval(x);
                out.push(g[comp]);
            }
            SeriesKind::TrigTensorGeneralized => {
                let q = init.len();
                let vars = q + x.len();
                let top: Vec<usize> = (0..vars)
                    .map(|v| self.tensor_terms.iter().map(|t| t[v] as usize).max().unwrap_or(0))
                    .collect();
                let mut ladders: Vec<Vec<f64>> = Vec::with_capacity(vars);
                let mut buf = Vec::new();
                for v in 0..vars {
                    let u = if v < q {
                        self.init_transforms[v].apply(init[v])
                    } else {
                        self.x_transforms[v - q].apply(x[v - q])
                    };
                    trig_ladder_into(u, top[v], &mut buf);
                    ladders.push(buf.clone());
                }
                out.clear();
                for t in &self.tensor_terms {
                    let mut p = 1.0;
                    for (v, &m) in t.iter().enumerate() {
                        if m != 0 {
                            p *= ladders[v][m as usize];
                        }
                    }
                    out.push(p);
                }
            }
        }
    }

    /// Design matrix rows (row-major, `n_columns()` per row) for component
    /// `comp` over the given rows of `s`.
    pub fn design(&self, comp: usize, s: &Sample, rows: &[usize]) -> Vec<f64> {
        let p = self.n_columns();
        let mut out = Vec::with_capacity(rows.len() * p);
        let mut buf = Vec::with_capacity(p);
        for &i in rows {
            self.columns_into(comp, s.row(i), &mut buf);
            out.extend_from_slice(&buf);
        }
        out
    }
}

/// Number of multi-indices with total frequency exactly `f` over `vars`
/// variables is enumerated lazily; this returns every multi-index (ladder
/// indices, at most `max_index` each) sorted by total frequency, then
/// lexicographically, truncated to `count`.
pub(crate) fn total_degree_terms(vars: usize, count: usize) -> Vec<Vec<u16>> {
    let mut out: Vec<Vec<u16>> = Vec::new();
    let mut total = 0usize;
    while out.len() < count {
        let mut level = Vec::new();
        enumerate_level(vars, total, &mut vec![0u16; vars], 0, &mut level);
        level.sort();
        out.extend(level);
        total += 1;
    }
    out.truncate(count);
    out
}

/// All ladder multi-indices whose frequencies sum to `total`.
fn enumerate_level(vars: usize, total: usize, cur: &mut Vec<u16>, v: usize, out: &mut Vec<Vec<u16>>) {
    if v == vars {
        let f: usize = cur.iter().map(|&m| trig_frequency(m as usize)).sum();
        if f == total {
            out.push(cur.clone());
        }
        return;
    }
    let used: usize = cur[..v].iter().map(|&m| trig_frequency(m as usize)).sum();
    let remaining = total - used;
    for m in 0..=(2 * remaining) {
        cur[v] = m as u16;
        enumerate_level(vars, total, cur, v + 1, out);
    }
    cur[v] = 0;
}

fn full_tensor_terms(q: usize, d: usize, k_u: usize, k_x: usize) -> Vec<Vec<u16>> {
    let limits: Vec<usize> = (0..q + d).map(|v| if v < q { k_u } else { k_x }).collect();
    let mut out = vec![Vec::new()];
    for &lim in &limits {
        out = out
            .into_iter()
            .flat_map(|t: Vec<u16>| {
                (0..=lim).map(move |m| {
                    let mut t = t.clone();
                    t.push(m as u16);
                    t
                })
            })
            .collect();
    }
    out.sort_by_key(|t| (t.iter().map(|&m| trig_frequency(m as usize)).sum::<usize>(), t.clone()));
    out
}

/// Hard cap on the number of tensor columns.
pub const TENSOR_COLUMN_CAP: usize = 4096;

pub fn build_series_space(init: SharedFit, kind: SeriesKind, k: usize, s: &Sample) -> Result<SeriesSpace> {
    build_series_space_with(init, kind, k, s, None, TensorLayout::default())
}

/// Full constructor: `gradient` is required for [`SeriesKind::TargetedSpan`].
pub fn build_series_space_with(
    init: SharedFit,
    kind: SeriesKind,
    k: usize,
    s: &Sample,
    gradient: Option<SharedFit>,
    layout: TensorLayout,
) -> Result<SeriesSpace> {
    let q = init.arity();
    let init_transforms = match kind {
        SeriesKind::TargetedSpan => Vec::new(),
        _ => init
            .fitted_range()
            .iter()
            .map(|&(lo, hi)| RangeTransform::padded(lo, hi))
            .collect::<Result<Vec<_>>>()?,
    };
    let mut space = SeriesSpace {
        kind,
        k,
        init,
        gradient: None,
        init_transforms,
        x_transforms: Vec::new(),
        layout,
        tensor_terms: Vec::new(),
    };
    match kind {
        SeriesKind::TrigComposed => {}
        SeriesKind::TargetedSpan => {
            let g = gradient.ok_or_else(|| Error::config("targeted span needs a gradient fit (Psi_dot_n)"))?;
            if g.arity() != q {
                return Err(Error::config("gradient fit arity must match the initial fit"));
            }
            space.gradient = Some(g);
            space.k = 1;
        }
        SeriesKind::TrigTensorGeneralized => {
            space.x_transforms = (0..s.d())
                .map(|j| {
                    let (lo, hi) = min_max(&s.column(j));
                    RangeTransform::padded(lo, hi)
                })
                .collect::<Result<Vec<_>>>()?;
            let vars = q + s.d();
            let count = match layout {
                TensorLayout::TotalDegree => k + 1,
                TensorLayout::Full { k_u, k_x } => (k_u + 1).pow(q as u32) * (k_x + 1).pow(s.d() as u32),
            };
            if count > TENSOR_COLUMN_CAP {
                return Err(Error::Resource(format!(
                    "tensor span would have {count} columns, above the cap of {TENSOR_COLUMN_CAP}"
                )));
            }
            space.tensor_terms = match layout {
                TensorLayout::TotalDegree => total_degree_terms(vars, count),
                TensorLayout::Full { k_u, k_x } => full_tensor_terms(q, s.d(), k_u, k_x),
            };
            space.k = space.tensor_terms.len() - 1;
        }
    }
    Ok(space)
}
