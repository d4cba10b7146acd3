//! `plugeff fit`: fits a regression function (or propensity score), writes
//! it under `--out` and prints the selection audit trail.

use std::path::Path;
use std::sync::Arc;

use clap::builder::PossibleValuesParser;
use clap::{Arg, Command};
use plugeff::hal::{
    default_candidates, enlarge_m, fit_hal_with, select_m_cv_with, variation_norm, HalConfig, HalFit, Relaxation,
};
use plugeff::ml_init::{
    bandwidth_grid, fit_boosting, fit_kernel, fit_kernel_cv, fit_poly, fit_poly_cv, BoostingConfig, BoostingFit,
    BoostingObjective, KernelConfig, KernelFit, KernelKind, PolyFit, DEFAULT_MAX_DEGREE,
};
use plugeff::rng::derive_seed;
use plugeff::series::{build_series_space, default_k_grid, fit_series, select_k_cv_with, write_series_text, SeriesFit, SeriesKind};
use plugeff::simlab::GCV_PLUS_EPSILON;
use plugeff::store::{write_arms_text, write_atomic};
use plugeff::summaries::Summary;
use plugeff::{empirical_risk, make_folds, ArmFit, Error, Exec, Loss, Result, Sample, SharedFit};

use crate::config::Settings;
use crate::input;

// Random streams: folds and boosting draws are offset per arm/target.
const STREAM_FOLDS: u64 = 100;
const STREAM_BOOST: u64 = 200;

pub fn command() -> Command {
    Command::new("fit")
        .about("Fit a regression function or propensity score and save it")
        .arg(
            Arg::new("kind")
                .value_name("KIND")
                .value_parser(PossibleValuesParser::new(["hal", "series", "boosting", "poly", "kernel"]))
                .help("Estimator to fit"),
        )
        .args(input::data_args())
        .arg(input::summary_arg())
        .arg(
            Arg::new("target")
                .long("target")
                .value_parser(PossibleValuesParser::new(["outcome", "propensity"]))
                .default_value("outcome")
                .help("Regress the outcome z, or the treatment a (propensity score) on the covariates"),
        )
        .arg(
            Arg::new("M")
                .long("M")
                .value_name("STRATEGY")
                .default_value("cv")
                .help("HAL bound: cv, gcv, gcv+ (moment2 only) or a fixed nonnegative value"),
        )
        .arg(
            Arg::new("init")
                .long("init")
                .value_parser(PossibleValuesParser::new(["boosting", "poly", "kernel", "hal"]))
                .default_value("boosting")
                .help("Initial fit under the series"),
        )
        .arg(Arg::new("K").long("K").value_name("K").default_value("cv").help("Series dimension: cv or a fixed value"))
        .arg(Arg::new("degree").long("degree").value_name("P").default_value("cv").help("Polynomial degree: cv or a fixed value"))
        .arg(
            Arg::new("kernel")
                .long("kernel")
                .value_parser(PossibleValuesParser::new(["epanechnikov", "gaussian"]))
                .default_value("epanechnikov")
                .help("Kernel for kernel regression"),
        )
        .arg(Arg::new("bandwidth").long("bandwidth").value_name("H").default_value("cv").help("Kernel bandwidth: cv or a fixed value"))
        .arg(Arg::new("folds").long("folds").value_name("V").default_value("10").help("Cross-validation folds"))
        .arg(Arg::new("name").long("name").value_name("NAME").help("Output file stem [default: the fit kind, or `propensity`]"))
}

/// A single fitted model in one of the storable formats.
enum Leaf {
    Hal(HalFit),
    Poly(PolyFit),
    Kernel(KernelFit),
    Boosting(BoostingFit),
}

impl Leaf {
    fn shared(&self) -> SharedFit {
        match self {
            Leaf::Hal(f) => Arc::new(f.clone()),
            Leaf::Poly(f) => Arc::new(f.clone()),
            Leaf::Kernel(f) => Arc::new(f.clone()),
            Leaf::Boosting(f) => Arc::new(f.clone()),
        }
    }

    fn text(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        match self {
            Leaf::Hal(f) => f.write_text(&mut buf)?,
            Leaf::Poly(f) => f.write_text(&mut buf)?,
            Leaf::Kernel(f) => f.write_text(&mut buf)?,
            Leaf::Boosting(f) => f.write_text(&mut buf)?,
        }
        Ok(buf)
    }
}

/// A fit together with the files needed to store it.
enum Saved {
    Leaf(Leaf),
    Arms(Box<Saved>, Box<Saved>, ArmFit),
    Series(SeriesFit, Box<Saved>),
}

impl Saved {
    fn shared(&self) -> SharedFit {
        match self {
            Saved::Leaf(l) => l.shared(),
            Saved::Arms(_, _, f) => Arc::new(f.clone()),
            Saved::Series(f, _) => Arc::new(f.clone()),
        }
    }

    /// Writes `<stem>.fit` plus the component files it references.
    fn save(&self, dir: &Path, stem: &str) -> Result<Vec<String>> {
        let file = format!("{stem}.fit");
        let mut written = Vec::new();
        let bytes = match self {
            Saved::Leaf(l) => l.text()?,
            Saved::Arms(a0, a1, fit) => {
                let (s0, s1) = (format!("{stem}.arm0"), format!("{stem}.arm1"));
                written.extend(a0.save(dir, &s0)?);
                written.extend(a1.save(dir, &s1)?);
                let mut buf = Vec::new();
                write_arms_text(fit, &format!("{s0}.fit"), &format!("{s1}.fit"), &mut buf)?;
                buf
            }
            Saved::Series(fit, init) => {
                let s_init = format!("{stem}.init");
                written.extend(init.save(dir, &s_init)?);
                let mut buf = Vec::new();
                write_series_text(fit, &format!("{s_init}.fit"), None, &mut buf)?;
                buf
            }
        };
        write_atomic(&dir.join(&file), &bytes)?;
        written.push(file);
        Ok(written)
    }
}

struct Fitter<'a> {
    settings: &'a Settings<'a>,
    seed: u64,
    folds: usize,
    exec: Exec,
}

impl Fitter<'_> {
    fn plan(&self, s: &Sample, stream: u64) -> Result<plugeff::FoldPlan> {
        make_folds(s.n(), self.folds, derive_seed(self.seed, STREAM_FOLDS + stream))
    }

    /// Fits one scalar model of kind `kind` to `t`. `stream` separates the
    /// random streams of different arms.
    fn leaf(&self, kind: &str, t: &Sample, loss: Loss, summary: &Summary, stream: u64, tag: &str) -> Result<Leaf> {
        let logistic = loss == Loss::Logistic;
        match kind {
            "hal" => {
                if logistic {
                    return Err(Error::config("HAL propensity fits are not supported; use boosting, kernel or poly"));
                }
                self.hal(t, summary, stream, tag).map(Leaf::Hal)
            }
            "boosting" => {
                let objective = if logistic { BoostingObjective::Logistic } else { BoostingObjective::SquaredError };
                let cfg = BoostingConfig {
                    objective,
                    seed: derive_seed(self.seed, STREAM_BOOST + stream),
                    ..BoostingConfig::default()
                };
                let f = fit_boosting(t, &cfg)?;
                println!("{tag}boosting: {} trees (early stopping on a 20% holdout)", f.n_trees());
                Ok(Leaf::Boosting(f))
            }
            "poly" => {
                let degree = self.settings.require("degree")?;
                let f = if degree == "cv" {
                    let sel = fit_poly_cv(t, DEFAULT_MAX_DEGREE, &self.plan(t, stream)?, self.exec)?;
                    println!("{tag}polynomial degree CV ({} folds):", self.folds);
                    println!("  {:>6}  {:>14}", "degree", "cv_risk");
                    for (p, r) in sel.degrees.iter().zip(&sel.cv_risks) {
                        println!("  {p:>6}  {r:>14.6e}");
                    }
                    println!("{tag}selected degree = {}", sel.selected);
                    sel.fit
                } else {
                    let p: usize = parse_fixed("degree", &degree)?;
                    fit_poly(t, p)?
                };
                Ok(Leaf::Poly(f))
            }
            "kernel" => {
                let kernel = KernelKind::from_name(&self.settings.require("kernel")?)?;
                let bw = self.settings.require("bandwidth")?;
                let f = if bw == "cv" {
                    let sel = fit_kernel_cv(t, kernel, &bandwidth_grid(t), &self.plan(t, stream)?, self.exec)?;
                    println!("{tag}bandwidth CV ({} folds):", self.folds);
                    println!("  {:>14}  {:>14}", "bandwidth", "cv_risk");
                    for (h, r) in sel.bandwidths.iter().zip(&sel.cv_risks) {
                        println!("  {h:>14.6e}  {r:>14.6e}");
                    }
                    println!("{tag}selected bandwidth = {:.6e}", sel.selected);
                    sel.fit
                } else {
                    let h: f64 = parse_fixed("bandwidth", &bw)?;
                    fit_kernel(t, KernelConfig { bandwidth: h, kernel })?
                };
                Ok(Leaf::Kernel(f))
            }
            other => Err(Error::config(format!("`{other}` cannot serve as an initial fit"))),
        }
    }

    fn hal(&self, t: &Sample, summary: &Summary, stream: u64, tag: &str) -> Result<HalFit> {
        let strategy = self.settings.require("M")?;
        let cfg = HalConfig::default();
        let basis = cfg.basis_for(t)?;
        let m = match strategy.as_str() {
            "cv" | "gcv" | "gcv+" => {
                let cands = default_candidates(t);
                let plan = self.plan(t, stream)?;
                let sel = select_m_cv_with(t, Loss::SquaredError, &cands, &plan, &cfg, self.exec)?;
                println!("{tag}HAL bound CV ({} folds):", self.folds);
                println!("  {:>14}  {:>14}", "M", "cv_risk");
                for (m, r) in sel.candidates.iter().zip(&sel.cv_risks) {
                    let mark = if *m == sel.m_n { "  <- M.cv" } else { "" };
                    println!("  {m:>14.6e}  {r:>14.6e}{mark}");
                }
                if strategy == "cv" {
                    sel.selected_m
                } else {
                    if !matches!(summary, Summary::MomentKappa(2)) {
                        return Err(Error::config(format!(
                            "bound strategy {strategy} enlarges M by the variation norm of the gradient, which is \
                             only implemented for moment2 (got {})",
                            summary.name()
                        )));
                    }
                    let eps = if strategy == "gcv" { 0.0 } else { GCV_PLUS_EPSILON };
                    let twice = |ms: &[f64]| 2.0 * ms[0];
                    let big = enlarge_m(&sel, &twice, &[sel.m_n], eps, Relaxation::Multiplicative)?;
                    println!("{tag}variation-norm ledger:");
                    println!("  M.cv                      = {:.6e}", sel.m_n);
                    println!("  relaxation (1 + eps)      = {:.6}", 1.0 + eps);
                    println!("  gradient bound F = 2 M    = {:.6e}", 2.0 * sel.m_n * (1.0 + eps));
                    println!("  selected M                = {:.6e}", big.selected_m);
                    big.selected_m
                }
            }
            fixed => parse_fixed::<f64>("M", fixed)?,
        };
        let fit = fit_hal_with(t, Loss::SquaredError, m, &basis, &cfg)?;
        println!("{tag}HAL fit: bound M = {m:.6e}, attained variation norm = {:.6e}, active terms = {}", variation_norm(&fit), fit.n_terms());
        Ok(fit)
    }

    /// Outcome model for the summary: one fit, a treated-arm fit, or a
    /// pair of per-arm fits.
    fn outcome(&self, kind: &str, s: &Sample, summary: &Summary) -> Result<Saved> {
        match summary {
            Summary::HteVariance => {
                let mut arms = Vec::with_capacity(2);
                for a in 0..2u8 {
                    let arm = s.arm(a)?;
                    arms.push(Saved::Leaf(self.leaf(kind, &arm, Loss::SquaredError, summary, 10 + a as u64, &format!("[arm {a}] "))?));
                }
                let a1 = arms.pop().expect("two arms");
                let a0 = arms.pop().expect("two arms");
                let fit = ArmFit::new(a0.shared(), a1.shared(), s)?;
                Ok(Saved::Arms(Box::new(a0), Box::new(a1), fit))
            }
            Summary::MeanCounterfactual => {
                let treated = s.arm(1)?;
                Ok(Saved::Leaf(self.leaf(kind, &treated, Loss::SquaredError, summary, 11, "[arm 1] ")?))
            }
            _ => Ok(Saved::Leaf(self.leaf(kind, s, Loss::SquaredError, summary, 0, "")?)),
        }
    }

    fn series(&self, s: &Sample, summary: &Summary) -> Result<Saved> {
        let init_kind = self.settings.require("init")?;
        let init = self.outcome(&init_kind, s, summary)?;
        let (train, kind, loss) = match summary {
            Summary::HteVariance => (s.clone(), SeriesKind::TrigTensorGeneralized, Loss::ArmSquaredError),
            Summary::MeanCounterfactual => (s.arm(1)?, SeriesKind::TrigComposed, Loss::SquaredError),
            _ => (s.clone(), SeriesKind::TrigComposed, Loss::SquaredError),
        };
        let k = self.settings.require("K")?;
        let fit = if k == "cv" {
            let grid = default_k_grid(train.n());
            let sel = select_k_cv_with(init.shared(), kind, &grid, &train, loss, &self.plan(&train, 0)?, self.exec)?;
            println!("series K CV ({} folds, {}):", self.folds, kind.name());
            println!("  {:>4}  {:>14}", "K", "cv_risk");
            for (k, r) in sel.k_grid.iter().zip(&sel.cv_risks) {
                let mark = if *k == sel.k_star { "  <- K*" } else { "" };
                println!("  {k:>4}  {r:>14.6e}{mark}");
            }
            println!("selected K* = {}", sel.k_star);
            sel.fit
        } else {
            let k: usize = parse_fixed("K", &k)?;
            let space = build_series_space(init.shared(), kind, k, &train)?;
            fit_series(&space, &train, loss)?
        };
        Ok(Saved::Series(fit, Box::new(init)))
    }
}

fn parse_fixed<T: std::str::FromStr>(id: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::config(format!("invalid value `{v}` for `{id}`")))
}

pub fn run(settings: &Settings, out: &Path) -> Result<()> {
    let kind = settings.require("kind").map_err(|_| Error::config("missing fit kind (hal, series, boosting, poly or kernel)"))?;
    if !["hal", "series", "boosting", "poly", "kernel"].contains(&kind.as_str()) {
        return Err(Error::config(format!("unknown fit kind `{kind}` (expected hal, series, boosting, poly or kernel)")));
    }
    let summary = input::summary(settings)?;
    let target = settings.require("target")?;
    let folds: usize = settings.parse("folds")?.expect("folds has a default");
    let stem = match settings.get("name") {
        Some(_) => input::file_name(settings, "name")?,
        None if target == "propensity" => "propensity".to_string(),
        None => kind.clone(),
    };
    let (s, _) = input::sample(settings)?;
    input::ensure_out_dir(out)?;
    let fitter = Fitter { settings, seed: input::seed(settings)?, folds, exec: input::exec(settings)? };

    let (saved, train, loss) = match target.as_str() {
        "propensity" => {
            if kind == "series" || kind == "hal" {
                return Err(Error::config("propensity fits support boosting, kernel or poly"));
            }
            let a = s.treatment()?;
            let sa = s.with_outcome(a.iter().map(|&v| v as f64).collect())?;
            let loss = if kind == "boosting" { Loss::Logistic } else { Loss::SquaredError };
            let leaf = fitter.leaf(&kind, &sa, loss, &summary, 5, "[propensity] ")?;
            (Saved::Leaf(leaf), sa, None)
        }
        "outcome" => {
            if summary.needs_treatment() && !s.has_treatment() {
                return Err(Error::data(format!("summary {} needs a treatment column `a`", summary.name())));
            }
            let saved = if kind == "series" { fitter.series(&s, &summary)? } else { fitter.outcome(&kind, &s, &summary)? };
            let train = if matches!(summary, Summary::MeanCounterfactual) { s.arm(1)? } else { s.clone() };
            let loss = if matches!(summary, Summary::HteVariance) { Loss::ArmSquaredError } else { Loss::SquaredError };
            (saved, train, Some(loss))
        }
        other => return Err(Error::config(format!("unknown target `{other}` (expected outcome or propensity)"))),
    };
    if let Some(loss) = loss {
        let risk = empirical_risk(saved.shared().as_ref(), loss, &train)?;
        println!("training risk ({}) = {risk:.6e} on n = {}", loss.name(), train.n());
    }
    println!("fit: {}", saved.shared().label());
    for file in saved.save(out, &stem)? {
        println!("wrote {}", out.join(file).display());
    }
    Ok(())
}
