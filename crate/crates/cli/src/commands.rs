use std::collections::{BTreeMap, BTreeSet};

use anyhow::{bail, ensure, Context, Result};
use perishlab::checks;
use perishlab::data::ScenarioSet;
use perishlab::datagen::gen_instance;
use perishlab::e2e::{BoostOutcome, E2eNet, E2ePolicy, EpochLog, NetKind, TrainConfig};
use perishlab::evaluation::{evaluate_policy, paired_t, relative_gap, EvalReport};
use perishlab::experiment::{Lambdas, Trial, TunedModel, Workbench};
use perishlab::features::FeatureSpec;
use perishlab::policy::{QuantileBenchmark, Scaled};
use perishlab::pto::{fit_pto, ppb_offsets, tune_ppb, PpbOutcome, PtoPolicy};
use perishlab::theory::excess_risk_experiment;
use perishlab_autodiff::Checkpoint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts::{data_file, meta_file, model_file, Artifacts};
use crate::config::{PolicyKind, RunConfig};

pub type Args = BTreeMap<String, String>;

pub fn gen(cfg: &RunConfig, args: &Args) -> Result<()> {
    let mut art = Artifacts::new(&cfg.out);
    write_data(cfg, &mut art)?;
    report(art.finish("gen", cfg, args)?);
    Ok(())
}

fn write_data(cfg: &RunConfig, art: &mut Artifacts) -> Result<()> {
    for i in 0..cfg.data.instances {
        let (set, meta) = gen_instance(&cfg.gen_config(i))?;
        let mut buf = Vec::new();
        set.write_csv(&mut buf)?;
        art.write(&data_file(i), &buf)?;
        art.write_json(&meta_file(i), &meta)?;
    }
    Ok(())
}

fn load_set(cfg: &RunConfig, art: &Artifacts, instance: usize) -> Result<ScenarioSet> {
    let bytes = art.read(&data_file(instance), "perishlab gen")?;
    let set = ScenarioSet::read_csv(bytes.as_slice())
        .with_context(|| format!("parsing {}", data_file(instance)))?;
    ensure!(
        set.horizon() >= cfg.system.horizon(),
        "instance {instance} has {} days but the system needs {}",
        set.horizon(),
        cfg.system.horizon()
    );
    Ok(set)
}

#[derive(Serialize, Deserialize)]
struct TrainRecord {
    lambdas: Lambdas,
    in_sample: f64,
    trials: Vec<Trial>,
    log: Vec<EpochLog>,
}

#[derive(Serialize, Deserialize)]
struct BoostRecord {
    base: String,
    outcome: BoostOutcome,
}

fn save_e2e(art: &mut Artifacts, instance: usize, m: &TunedModel) -> Result<()> {
    let name = m.policy.label.clone();
    art.write(
        &model_file(instance, &name),
        m.policy.net.to_checkpoint().to_json()?.as_bytes(),
    )?;
    art.write_json(
        &model_file(instance, &format!("{name}.train")),
        &TrainRecord {
            lambdas: m.lambdas,
            in_sample: m.in_sample,
            trials: m.trials.clone(),
            log: m.log.clone(),
        },
    )
}

fn selected(cfg: &RunConfig, only: &[PolicyKind]) -> Result<Vec<PolicyKind>> {
    if only.is_empty() {
        return Ok(cfg.policies.clone());
    }
    for p in only {
        ensure!(
            cfg.wants(*p),
            "policy {p} is not listed in the config's policies"
        );
    }
    Ok(only.to_vec())
}

pub fn train(cfg: &RunConfig, only: &[PolicyKind], args: &Args) -> Result<()> {
    let mut art = Artifacts::new(&cfg.out);
    let policies = selected(cfg, only)?;
    for i in 0..cfg.data.instances {
        train_instance(cfg, &policies, &mut art, i)?;
    }
    report(art.finish("train", cfg, args)?);
    Ok(())
}

fn train_instance(
    cfg: &RunConfig,
    policies: &[PolicyKind],
    art: &mut Artifacts,
    i: usize,
) -> Result<()> {
    use PolicyKind::*;
    let want = |k| policies.contains(&k);
    let bench = Workbench::new(load_set(cfg, art, i)?, cfg.system, cfg.costs)?;
    let tcfg = TrainConfig {
        seed: cfg.train_seed(i),
        ..cfg.train
    };
    let grid = cfg.tune.as_ref();
    if want(E2eBb) {
        let m = bench.train(NetKind::BlackBox, &tcfg, grid)?;
        save_e2e(art, i, &m)?;
    }
    if want(E2ePil) || want(E2eBpil) {
        let m = bench.train(NetKind::Pil, &tcfg, grid)?;
        save_e2e(art, i, &m)?;
        if want(E2eBpil) {
            let (outcome, _) = bench.boost(&m.policy, &cfg.boost)?;
            art.write_json(
                &model_file(i, E2eBpil.name()),
                &BoostRecord {
                    base: E2ePil.name().into(),
                    outcome,
                },
            )?;
        }
    }
    if want(PtoPb) || want(PtoPpb) {
        let models = fit_pto(&bench.samples, cfg.pto.ridge)?;
        let mut base = PtoPolicy::new(models, cfg.system, cfg.costs, bench.spec, cfg.pto_seed(i));
        base.scenarios = cfg.pto.scenarios;
        art.write_json(&model_file(i, PtoPb.name()), &base)?;
        if want(PtoPpb) {
            let (outcome, _) = tune_ppb(&base, &bench.set, &bench.samples, &ppb_offsets())?;
            art.write_json(&model_file(i, PtoPpb.name()), &outcome)?;
        }
    }
    eprintln!("trained instance {i}");
    Ok(())
}

fn load_json<T: for<'de> Deserialize<'de>>(art: &Artifacts, rel: &str) -> Result<T> {
    let text = art.read_string(rel, "perishlab train")?;
    serde_json::from_str(&text).with_context(|| format!("parsing {rel}"))
}

fn load_e2e(art: &Artifacts, i: usize, kind: PolicyKind) -> Result<E2ePolicy> {
    let rel = model_file(i, kind.name());
    let text = art.read_string(&rel, "perishlab train")?;
    let ckpt = Checkpoint::from_json(&text).with_context(|| format!("parsing {rel}"))?;
    Ok(E2ePolicy::new(kind.name(), E2eNet::from_checkpoint(&ckpt)?))
}

fn evaluate_kind(
    cfg: &RunConfig,
    art: &Artifacts,
    set: &ScenarioSet,
    i: usize,
    kind: PolicyKind,
) -> Result<EvalReport> {
    let (sys, costs) = (&cfg.system, &cfg.costs);
    let mut r = match kind {
        PolicyKind::Benchmark => {
            let spec = FeatureSpec::new(costs);
            evaluate_policy(&QuantileBenchmark::new(&spec, sys), set, sys, costs)?
        }
        PolicyKind::E2eBb | PolicyKind::E2ePil => {
            evaluate_policy(&load_e2e(art, i, kind)?, set, sys, costs)?
        }
        PolicyKind::E2eBpil => {
            let boost: BoostRecord = load_json(art, &model_file(i, kind.name()))?;
            let base = load_e2e(art, i, PolicyKind::E2ePil)?;
            let policy = Scaled {
                base,
                gamma: boost.outcome.gamma,
            };
            evaluate_policy(&policy, set, sys, costs)?
        }
        PolicyKind::PtoPb => {
            let p: PtoPolicy = load_json(art, &model_file(i, kind.name()))?;
            evaluate_policy(&p, set, sys, costs)?
        }
        PolicyKind::PtoPpb => {
            let p: PtoPolicy = load_json(art, &model_file(i, PolicyKind::PtoPb.name()))?;
            let tuned: PpbOutcome = load_json(art, &model_file(i, kind.name()))?;
            evaluate_policy(&p.with_offset(tuned.offset), set, sys, costs)?
        }
    };
    ensure!(
        r.summary.total.is_finite() && r.per_product.iter().all(|c| c.is_finite()),
        "{kind} produced a non-finite cost on instance {i}"
    );
    r.policy = kind.name().into();
    Ok(r)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRow {
    pub instance: usize,
    pub policy: String,
    pub total: f64,
    pub holding: f64,
    pub backorder: f64,
    pub outdating: f64,
    pub stockout_rate: f64,
    pub outdating_rate: f64,
}

#[derive(Serialize)]
struct ProductRow<'a> {
    instance: usize,
    policy: &'a str,
    product: usize,
    cost: f64,
}

pub fn eval(cfg: &RunConfig, only: &[PolicyKind], args: &Args) -> Result<()> {
    let mut art = Artifacts::new(&cfg.out);
    write_eval(cfg, only, &mut art)?;
    report(art.finish("eval", cfg, args)?);
    Ok(())
}

fn write_eval(cfg: &RunConfig, only: &[PolicyKind], art: &mut Artifacts) -> Result<()> {
    let policies = selected(cfg, only)?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for i in 0..cfg.data.instances {
        let set = load_set(cfg, art, i)?;
        for &kind in &policies {
            let r = evaluate_kind(cfg, art, &set, i, kind)?;
            let s = r.summary;
            rows.push(EvalRow {
                instance: i,
                policy: r.policy.clone(),
                total: s.total,
                holding: s.holding,
                backorder: s.backorder,
                outdating: s.outdating,
                stockout_rate: s.stockout_rate,
                outdating_rate: s.outdating_rate,
            });
            reports.push(r);
        }
    }
    let per: Vec<ProductRow> = reports
        .iter()
        .flat_map(|r| {
            r.per_product
                .iter()
                .enumerate()
                .map(move |(p, &cost)| ProductRow {
                    instance: r.instance,
                    policy: &r.policy,
                    product: p,
                    cost,
                })
        })
        .collect();
    art.write_csv("reports/eval.csv", &rows)?;
    art.write_csv("reports/per_product.csv", &per)?;
    Ok(())
}

#[derive(Serialize)]
struct GapRow<'a> {
    instance: usize,
    policy: &'a str,
    total: f64,
    benchmark: f64,
    gap: f64,
}

#[derive(Serialize)]
struct TestRow<'a> {
    policy: &'a str,
    versus: &'a str,
    mean_policy: f64,
    mean_versus: f64,
    t: f64,
    p: f64,
    df: f64,
    cell: String,
}

pub fn compare(cfg: &RunConfig, args: &Args) -> Result<()> {
    let mut art = Artifacts::new(&cfg.out);
    let text = art.read("reports/eval.csv", "perishlab eval")?;
    let rows: Vec<EvalRow> = csv::Reader::from_reader(text.as_slice())
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .context("parsing reports/eval.csv")?;
    let mut table: BTreeMap<&str, BTreeMap<usize, f64>> = BTreeMap::new();
    for r in &rows {
        table
            .entry(r.policy.as_str())
            .or_default()
            .insert(r.instance, r.total);
    }
    let Some(bench) = table.get("benchmark") else {
        bail!("reports/eval.csv has no benchmark rows; evaluate the benchmark policy first");
    };
    let gaps: Vec<GapRow> = rows
        .iter()
        .filter_map(|r| {
            bench.get(&r.instance).map(|&b| GapRow {
                instance: r.instance,
                policy: &r.policy,
                total: r.total,
                benchmark: b,
                gap: relative_gap(r.total, b),
            })
        })
        .collect();
    art.write_csv("reports/gaps.csv", &gaps)?;

    // Cell (policy, versus) tests whether `policy` is cheaper than `versus`.
    let names: Vec<&str> = order_policies(table.keys().copied());
    let mut tests = Vec::new();
    let mut matrix = vec![vec![String::new(); names.len()]; names.len()];
    for (a, &pa) in names.iter().enumerate() {
        for (b, &pb) in names.iter().enumerate() {
            if a == b {
                continue;
            }
            let common: Vec<usize> = table[pa]
                .keys()
                .filter(|i| table[pb].contains_key(i))
                .copied()
                .collect();
            if common.len() < 2 {
                continue;
            }
            let ca: Vec<f64> = common.iter().map(|i| table[pa][i]).collect();
            let cb: Vec<f64> = common.iter().map(|i| table[pb][i]).collect();
            let t = paired_t(&cb, &ca)?;
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            matrix[a][b] = t.cell();
            tests.push(TestRow {
                policy: pa,
                versus: pb,
                mean_policy: mean(&ca),
                mean_versus: mean(&cb),
                t: t.t,
                p: t.p,
                df: t.df,
                cell: t.cell(),
            });
        }
    }
    if tests.is_empty() {
        eprintln!("fewer than two instances per policy; no t-tests written");
    } else {
        art.write_csv("reports/ttests.csv", &tests)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["policy"];
        header.extend(&names);
        w.write_record(&header)?;
        for (name, row) in names.iter().zip(&matrix) {
            let mut rec = vec![name.to_string()];
            rec.extend(row.iter().cloned());
            w.write_record(&rec)?;
        }
        art.write("reports/ttests_table.csv", &w.into_inner()?)?;
    }
    report(art.finish("compare", cfg, args)?);
    Ok(())
}

fn order_policies<'a>(names: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut v: Vec<&str> = names.collect();
    v.sort_by_key(|n| {
        (
            n.parse::<PolicyKind>().map_or(usize::MAX, |k| k as usize),
            *n,
        )
    });
    v
}

#[derive(Serialize)]
struct SweepRow {
    parameter: String,
    value: f64,
    policy: String,
    mean_total: f64,
    directory: String,
}

pub fn sweep(cfg: &RunConfig, vary: &str, values: &[f64], args: &Args) -> Result<()> {
    ensure!(!values.is_empty(), "--values must list at least one value");
    let runs: Vec<(f64, RunConfig)> = values
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            c.set_param(vary, v)?;
            c.out = cfg.out.join("sweep").join(format!("{vary}={v}"));
            c.validate()?;
            Ok((v, c))
        })
        .collect::<Result<_>>()?;
    let results = runs
        .par_iter()
        .map(|(v, c)| -> Result<Vec<SweepRow>> {
            let mut art = Artifacts::new(&c.out);
            write_data(c, &mut art)?;
            for i in 0..c.data.instances {
                train_instance(c, &c.policies, &mut art, i)?;
            }
            write_eval(c, &[], &mut art)?;
            let text = std::fs::read(art.path("reports/eval.csv"))?;
            art.finish("sweep", c, args)?;
            let rows: Vec<EvalRow> = csv::Reader::from_reader(text.as_slice())
                .deserialize()
                .collect::<std::result::Result<_, _>>()?;
            let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
            for r in rows {
                let e = sums.entry(r.policy).or_default();
                e.0 += r.total;
                e.1 += 1;
            }
            Ok(sums
                .into_iter()
                .map(|(policy, (s, n))| SweepRow {
                    parameter: vary.to_string(),
                    value: *v,
                    policy,
                    mean_total: s / n as f64,
                    directory: format!("sweep/{vary}={v}"),
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut art = Artifacts::new(&cfg.out);
    let rows: Vec<SweepRow> = results.into_iter().flatten().collect();
    art.write_csv(&format!("reports/sweep_{vary}.csv"), &rows)?;
    report(art.finish(&format!("sweep_{vary}"), cfg, args)?);
    Ok(())
}

#[derive(Serialize)]
struct CurveRow<'a> {
    n: usize,
    class: &'a str,
    mean_risk: f64,
    sd_risk: f64,
    mean_excess: f64,
    sd_excess: f64,
}

#[derive(Serialize)]
struct DominanceRow {
    n: usize,
    t: f64,
    p: f64,
    df: f64,
    cell: String,
}

pub fn theory(cfg: &RunConfig, args: &Args) -> Result<()> {
    let mut art = Artifacts::new(&cfg.out);
    let mut exp = cfg.theory.experiment.clone();
    exp.seed = cfg.seed;
    let rep = excess_risk_experiment(&cfg.theory.world, &exp)?;
    let rows: Vec<CurveRow> = rep
        .points
        .iter()
        .map(|p| CurveRow {
            n: p.n,
            class: p.class.label(),
            mean_risk: p.mean_risk,
            sd_risk: p.sd_risk,
            mean_excess: p.mean_excess,
            sd_excess: p.sd_excess,
        })
        .collect();
    ensure!(
        rows.iter().all(|r| r.mean_risk.is_finite()),
        "non-finite risk in the theory experiment"
    );
    art.write_csv("reports/curves.csv", &rows)?;
    if exp.seeds >= 2 {
        let ns: BTreeSet<usize> = rep.points.iter().map(|p| p.n).collect();
        let tests = ns
            .into_iter()
            .map(|n| {
                let t = rep.dominance_test(n)?;
                Ok(DominanceRow {
                    n,
                    t: t.t,
                    p: t.p,
                    df: t.df,
                    cell: t.cell(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        art.write_csv("reports/dominance.csv", &tests)?;
    }
    println!(
        "optimal risk {:.5} (closed form {:.5}), sample ratio {:.3}",
        rep.optimal_risk, rep.analytic_optimal_risk, rep.sample_ratio
    );
    report(art.finish("theory", cfg, args)?);
    Ok(())
}

pub fn selftest(cfg: &RunConfig, args: &Args) -> Result<()> {
    let outcomes = checks::run_all(cfg.seed)?;
    for o in &outcomes {
        println!("{}", o.line());
    }
    let mut art = Artifacts::new(&cfg.out);
    art.write_json("reports/selftest.json", &outcomes)?;
    art.finish("selftest", cfg, args)?;
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    ensure!(failed == 0, "{failed} of {} suites failed", outcomes.len());
    println!("all {} suites passed", outcomes.len());
    Ok(())
}

fn report(outputs: BTreeMap<String, String>) {
    eprintln!("wrote {} files", outputs.len() + 1);
}
