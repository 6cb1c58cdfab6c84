use anyhow::{anyhow, Context};
use armadesign::asymptotics::{ck_from_fit, efficiency_indicators, mse_from_ck};
use armadesign::estimation::{fit_arma_yw, fit_varma_yw, select_order, Criterion, FitResult};
use armadesign::optimal::{co_design, rl_design, solve_alpha};
use armadesign::simulation::{
    dispatch_simulate, monte_carlo_mse, peak_dummy_column, simulate_arma, simulate_varma, DispatchConfig, FitSpec,
    Generator, McConfig, McReport,
};
use armadesign::{io, DesignSpec, Model, PanelData};
use serde::Serialize;

use crate::designs_arg::parse_design;
use crate::{
    CompareArgs, CriterionArg, DesignArgs, DesignMethod, Failure, FitArgs, IndicatorsArgs, KindArg, OrderArgs,
    SimulateArgs,
};

type Outcome = Result<(), Failure>;

fn read<T: serde::de::DeserializeOwned>(path: &std::path::Path, what: &str) -> Result<T, Failure> {
    Ok(io::read_json(path).with_context(|| format!("reading {what} {}", path.display()))?)
}

fn criterion(c: CriterionArg) -> Criterion {
    match c {
        CriterionArg::Aic => Criterion::Aic,
        CriterionArg::Bic => Criterion::Bic,
    }
}

pub fn simulate(a: SimulateArgs) -> Outcome {
    let design = parse_design(&a.design)?;
    let panel = match (&a.model, &a.dispatch) {
        (Some(path), None) => {
            let horizon = a.horizon.ok_or_else(|| Failure::Usage("--model needs --horizon".into()))? as usize;
            match read::<Model>(path, "model")? {
                Model::Arma(m) => simulate_arma(&m, &design, horizon, a.seed, None)?,
                Model::Varma(m) => {
                    let exog = match &m.c {
                        Some(_) => Some(peak_dummy_column(horizon, &a.dt_label)?),
                        None => None,
                    };
                    let mut p = simulate_varma(&m, &design, exog.as_ref(), horizon, a.seed, None)?;
                    p.dt_label = a.dt_label.clone();
                    p
                }
            }
        }
        (None, Some(path)) => {
            let days = a.days.ok_or_else(|| Failure::Usage("--dispatch needs --days".into()))? as usize;
            let cfg: DispatchConfig = read(path, "dispatch config")?;
            dispatch_simulate(&cfg, &design, days, a.seed)?
        }
        _ => return Err(Failure::Usage("give exactly one of --model or --dispatch".into())),
    };
    panel.write_csv_file(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "wrote {} rows x {} outcome columns ({}) to {} (seed {})",
        panel.len(),
        panel.d(),
        design.label,
        a.out.display(),
        a.seed
    );
    if a.dispatch.is_some() {
        println!("interval length {}; pass --dt-label {} to fit", panel.dt_label, panel.dt_label);
    }
    Ok(())
}

fn fixed_order(order: &OrderArgs) -> Option<(usize, usize)> {
    order.p.zip(order.q)
}

pub fn fit(a: FitArgs) -> Outcome {
    let fixed = fixed_order(&a.order);
    if fixed.is_none() && !a.order.auto_order {
        return Err(Failure::Usage("give --p and --q, or --auto-order".into()));
    }
    let panel = PanelData::read_csv_file(&a.data, &a.dt_label)?;
    let (p, q) = if a.order.auto_order {
        let sel = select_order(&panel, a.order.pmax, a.order.qmax, criterion(a.order.criterion))?;
        println!("{:>3} {:>3} {:>24}", "p", "q", format!("{:?}", sel.criterion).to_uppercase());
        for s in &sel.scores {
            let score = match (&s.score, &s.error) {
                (Some(v), _) => format!("{v:.6}"),
                (None, Some(e)) => format!("failed: {e}"),
                (None, None) => "-".into(),
            };
            let mark = if (s.p, s.q) == (sel.p, sel.q) { " *" } else { "" };
            println!("{:>3} {:>3} {:>24}{mark}", s.p, s.q, score);
        }
        (sel.p, sel.q)
    } else {
        fixed.expect("checked above")
    };
    let arma = match a.kind {
        KindArg::Arma => true,
        KindArg::Varma => false,
        KindArg::Auto => panel.d() == 1 && panel.e.is_none(),
    };
    let fit = if arma { fit_arma_yw(&panel, p, q)? } else { fit_varma_yw(&panel, p, q)? };
    io::write_json(&a.out, &fit).with_context(|| format!("writing {}", a.out.display()))?;
    let ate = fit.ate_hat.map_or("unbounded (near unit root)".to_string(), |v| format!("{v:.6}"));
    println!(
        "{} fit p={p} q={q} on {} rows: ate_hat {ate}; AR spectral radius {:.6}{}",
        if arma { "ARMA" } else { "VARMA" },
        fit.n_used,
        fit.ar_spectral_radius,
        if fit.ar_stable { "" } else { " (NOT stable)" }
    );
    Ok(())
}

pub fn indicators(a: IndicatorsArgs) -> Outcome {
    let fit: FitResult = read(&a.fit, "fit")?;
    let r = efficiency_indicators(&fit)?;
    println!("{:<12} {:>16}", "EI_AD", format!("{:.6}", r.ei_ad));
    println!("{:<12} {:>16}", "EI_AT", format!("{:.6}", r.ei_at));
    println!("{:<12} {:>16}", "K", format!("{:.6}", r.k_scale));
    for (label, v) in &r.mse {
        println!("{:<12} {:>16}", format!("T*MSE {label}"), format!("{v:.6}"));
    }
    println!("recommendation: {:?}", r.recommendation);
    println!(
        "identity mse_X - mse_UR = 8 K EI_X: {} (relative residual {:.2e})",
        if r.identity_holds { "pass" } else { "FAIL" },
        r.identity_residual
    );
    if let Some(out) = &a.out {
        io::write_json(out, &r).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

pub fn design(a: DesignArgs) -> Outcome {
    if !(a.gamma > 0.0 && a.gamma < 1.0) || !(a.tol > 0.0) {
        return Err(Failure::Usage("--gamma must lie in (0, 1) and --tol must be positive".into()));
    }
    let fit: FitResult = read(&a.fit, "fit")?;
    let ck = ck_from_fit(&fit)?;
    let spec = match a.method {
        DesignMethod::Co => {
            let sol = solve_alpha(&ck);
            println!("CO: alpha* = {:.12}, lag objective {:.6}", sol.alpha, sol.objective);
            co_design(&ck)
        }
        DesignMethod::Rl => {
            if ck.q() == 0 {
                println!("note: the fit has q = 0, so no design beats UR; emitting UR");
            }
            rl_design(&ck, a.gamma, a.tol)?
        }
    };
    if ck.q() == 0 && matches!(a.method, DesignMethod::Co) {
        println!("note: the fit has q = 0, so every balanced design is equivalent");
    }
    match mse_from_ck(&ck, &spec) {
        Ok(m) => println!("{}: asymptotic T*MSE {m:.6}", spec.label),
        Err(e) => println!("{}: asymptotic T*MSE unavailable ({e})", spec.label),
    }
    io::write_json(&a.out, &spec).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct RankEntry {
    rank: usize,
    design_label: String,
    mse: f64,
    se_of_mse: f64,
    rmse: f64,
    failures: usize,
}

#[derive(Serialize)]
struct CompareOutput {
    reports: Vec<McReport>,
    /// Ascending MSE; equal MSEs keep the order of `--designs`.
    ranking: Vec<RankEntry>,
}

pub fn compare(a: CompareArgs) -> Outcome {
    let designs: Vec<DesignSpec> = a.designs.iter().map(|d| parse_design(d)).collect::<Result<_, _>>()?;
    if designs.is_empty() {
        return Err(Failure::Usage("--designs is empty".into()));
    }
    let (generator, default_order) = if let Some(path) = &a.model {
        let model: Model = read(path, "model")?;
        let order = (model.p(), model.q());
        (Generator::Model { model }, Some(order))
    } else if let Some(path) = &a.bootstrap_fit {
        let fit: FitResult = read(path, "fit")?;
        let order = (fit.p, fit.q);
        (Generator::Bootstrap { fit, b_inject: a.b_inject }, Some(order))
    } else if let Some(path) = &a.dispatch {
        (Generator::Dispatch { config: read(path, "dispatch config")? }, None)
    } else {
        return Err(Failure::Usage("give one of --model, --bootstrap-fit or --dispatch".into()));
    };
    let fit = if a.order.auto_order {
        FitSpec::Auto { p_max: a.order.pmax, q_max: a.order.qmax, criterion: criterion(a.order.criterion) }
    } else {
        let (p, q) = fixed_order(&a.order)
            .or(default_order)
            .ok_or_else(|| Failure::Usage("the dispatch generator needs --p/--q or --auto-order".into()))?;
        FitSpec::Fixed { p, q }
    };
    let mut cfg = McConfig::new(a.reps as usize, a.horizon as usize, a.seed, fit);
    cfg.jobs = a.jobs as usize;
    cfg.oracle_days = a.oracle_days;

    let mut reports = Vec::with_capacity(designs.len());
    for d in &designs {
        let rep = monte_carlo_mse(&generator, d, &cfg).with_context(|| format!("design {}", d.label))?;
        if !rep.failures.is_empty() {
            eprintln!("warning: {}: {} of {} replicates failed to fit", rep.design_label, rep.failures.len(), rep.reps);
        }
        reports.push(rep);
    }
    let mut order: Vec<usize> = (0..reports.len()).collect();
    order.sort_by(|&i, &j| reports[i].mse.total_cmp(&reports[j].mse));
    let ranking: Vec<RankEntry> = order
        .iter()
        .enumerate()
        .map(|(rank, &i)| {
            let r = &reports[i];
            RankEntry {
                rank: rank + 1,
                design_label: r.design_label.clone(),
                mse: r.mse,
                se_of_mse: r.se_of_mse,
                rmse: r.rmse,
                failures: r.failures.len(),
            }
        })
        .collect();

    println!("oracle ATE {:.6}", reports[0].oracle_ate);
    println!("{:>4}  {:<24} {:>14} {:>14} {:>14}", "rank", "design", "T*MSE", "T*SE(MSE)", "RMSE");
    let scale = cfg.horizon as f64;
    for e in &ranking {
        println!(
            "{:>4}  {:<24} {:>14.6} {:>14.6} {:>14.6}",
            e.rank,
            e.design_label,
            scale * e.mse,
            scale * e.se_of_mse,
            e.rmse
        );
    }
    let out = CompareOutput { reports, ranking };
    io::write_json(&a.out, &out).map_err(|e| anyhow!(e)).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}
