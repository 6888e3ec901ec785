//! Subcommand implementations.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use insider_core::ae::TrainConfig;
use insider_core::baseline::{run_baseline, write_labels_csv, BaselineConfig, Label};
use insider_core::checks;
use insider_core::detect::{
    compute_metrics, explained_variance_score, overlap, write_report_csv, write_s_star_histogram,
    write_t_star_histogram, Metrics, Overlap, ThresholdPolicy, Thresholds,
};
use insider_core::enrich::{compositions, enrichment};
use insider_core::ingest::{
    build_positions, derive_calendar, normalize_and_filter, parse_transactions, restrict_to_window,
    write_transactions, CalendarSpec, ColumnMap, PositionMatrix, TradingCalendar, TransactionRecord,
};
use insider_core::pipeline::{run as run_pipeline, ModelFamily};
use insider_core::select::{scan_k, KScanResult, StabilityRule};
use insider_core::synth::{generate, ScenarioConfig, TruthLabel};
use insider_core::Error;

use crate::args::{
    BaselineArgs, BaselineMode, CheckArgs, EnrichArgs, InputArgs, ModelArgs, RunArgs, ScanArgs, ScanRange,
    ScenarioName, SynthArgs, ThresholdArgs,
};
use crate::output::OutputSet;

const OVERLAP_DEPTHS: [usize; 6] = [10, 20, 50, 100, 200, 500];

struct Loaded {
    records: Vec<TransactionRecord>,
    calendar: TradingCalendar,
    truth: Option<BTreeMap<String, TruthLabel>>,
}

fn scenario(name: ScenarioName, seed: u64) -> ScenarioConfig {
    match name {
        ScenarioName::Standard => ScenarioConfig::standard(seed),
        ScenarioName::Small => ScenarioConfig::small(seed),
    }
}

fn read_records(path: &Path) -> Result<Vec<TransactionRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(parse_transactions(BufReader::new(file), &ColumnMap::default())?)
}

fn load(input: &InputArgs, seed: u64) -> Result<Loaded> {
    match (&input.input, input.synth) {
        (Some(path), None) => {
            let records = read_records(path)?;
            let spec = CalendarSpec {
                t0: input.t0,
                t_end: input.t_end,
                pse_date: input.pse_date,
                delta_days: input.delta_days,
            };
            let calendar = derive_calendar(&records, &spec)?;
            let records = restrict_to_window(&records, &calendar);
            Ok(Loaded {
                records,
                calendar,
                truth: None,
            })
        }
        (None, Some(name)) => {
            if input.t0.is_some() || input.t_end.is_some() || input.pse_date.is_some() {
                log::warn!("calendar flags are ignored for generated scenarios");
            }
            let s = generate(&scenario(name, seed))?;
            Ok(Loaded {
                records: s.records,
                calendar: s.calendar,
                truth: Some(s.truth),
            })
        }
        _ => Err(Error::Config("give exactly one of --input or --synth".into()).into()),
    }
}

fn positions(loaded: &Loaded) -> Result<PositionMatrix> {
    Ok(normalize_and_filter(&build_positions(&loaded.records, &loaded.calendar)?)?)
}

fn family(m: &ModelArgs) -> Result<ModelFamily> {
    let family: ModelFamily = m.model.parse()?;
    Ok(match (family, m.lambda) {
        (ModelFamily::Lae { .. }, Some(lambda)) => ModelFamily::Lae { lambda },
        (_, Some(_)) => {
            log::warn!("--lambda only applies to the linear autoencoder");
            family
        }
        _ => family,
    })
}

fn train_config(m: &ModelArgs, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: m.learning_rate,
        epochs: m.epochs,
        batch_size: m.batch_size,
        seed,
        ..TrainConfig::default()
    }
}

fn policy(t: &ThresholdArgs) -> ThresholdPolicy {
    ThresholdPolicy {
        epsilon_theta: t.epsilon_theta,
        n_theta: t.n_theta,
        d_theta: t.d_theta,
        net_buy_threshold: t.net_buy,
        nt_on_tstar_only: t.nt_on_tstar_only,
    }
}

fn scan(pm: &PositionMatrix, family: ModelFamily, range: &ScanRange, cfg: &TrainConfig, policy: &ThresholdPolicy) -> Result<KScanResult> {
    let k_max = range.k_max.min(pm.n_days());
    if range.k_min < 1 || range.k_min >= k_max {
        return Err(Error::Config(format!("K scan range {}..={k_max} is empty", range.k_min)).into());
    }
    let ks: Vec<usize> = (range.k_min..=k_max).collect();
    let rule = StabilityRule {
        window: range.stability_window,
        j_min: range.j_min,
    };
    Ok(scan_k(pm, family, &ks, cfg, policy, &rule)?)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> insider_core::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

#[derive(Serialize)]
struct ScanSummary {
    chosen_k: usize,
    stable: bool,
}

#[derive(Serialize)]
struct BaselineSummary {
    hard: usize,
    soft: usize,
    overlap: Overlap,
    metrics: Option<Metrics>,
}

#[derive(Serialize)]
struct TruthSummary {
    hard_total: usize,
    hard_flagged: usize,
    hard_in_top_50: usize,
    soft_total: usize,
    soft_flagged: usize,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    model: String,
    k: usize,
    k_scan: Option<ScanSummary>,
    investors: usize,
    days: usize,
    first_day: String,
    pse_day: String,
    flagged: usize,
    thresholds: &'a Thresholds,
    frobenius: f64,
    evs: f64,
    top_ranked: Vec<&'a str>,
    baseline: Option<BaselineSummary>,
    baseline_skipped: Option<String>,
    synthetic_truth: Option<TruthSummary>,
}

pub fn run(args: &RunArgs) -> Result<()> {
    let family = family(&args.model)?;
    let cfg = train_config(&args.model, args.seed);
    let policy = policy(&args.thresholds);
    let loaded = load(&args.input, args.seed)?;
    let pm = positions(&loaded)?;
    let mut out = OutputSet::new(&args.out, "run", args, Some(args.seed))?;

    let (k, k_scan) = if args.k == "auto" {
        let s = scan(&pm, family, &args.scan, &cfg, &policy)?;
        out.write("kscan", "csv", &csv_bytes(|b| s.write_csv(b))?)?;
        (s.chosen_k, Some(ScanSummary { chosen_k: s.chosen_k, stable: s.stable }))
    } else {
        let k = args
            .k
            .parse()
            .map_err(|_| Error::Config(format!("--k must be a positive integer or auto, got {:?}", args.k)))?;
        (k, None)
    };

    let (model, recon, det) = run_pipeline(&pm, family, k, &cfg, &policy)?;
    out.write("report", "csv", &csv_bytes(|b| write_report_csv(b, &det.report, &pm.calendar))?)?;
    out.write("s_star_hist", "csv", &csv_bytes(|b| write_s_star_histogram(b, &det.scores, args.bins))?)?;
    out.write("t_star_hist", "csv", &csv_bytes(|b| write_t_star_histogram(b, &det.scores, &pm.calendar))?)?;
    out.write("model", "txt", model.to_text().as_bytes())?;

    let has_values = loaded.records.iter().all(|r| r.buy_value.is_some() && r.sell_value.is_some());
    let (baseline, baseline_skipped) = match (args.baseline, has_values) {
        (BaselineMode::Off, _) => (None, Some("disabled".to_string())),
        (BaselineMode::Auto, false) => {
            let why = "input has no currency columns";
            log::warn!("k-means baseline skipped: {why}");
            (None, Some(why.to_string()))
        }
        _ => {
            let bcfg = BaselineConfig {
                k: args.baseline_opts.baseline_k,
                seed: args.seed,
                n_init: args.baseline_opts.n_init,
            };
            let labels = run_baseline(&loaded.records, &loaded.calendar, &bcfg)?;
            out.write("baseline_labels", "csv", &csv_bytes(|b| write_labels_csv(b, &labels))?)?;
            let anomalous: HashSet<String> = labels
                .iter()
                .filter(|l| l.label != Label::Normal)
                .map(|l| l.investor_id.clone())
                .collect();
            let index: Vec<usize> = pm
                .investor_ids
                .iter()
                .enumerate()
                .filter(|(_, id)| anomalous.contains(*id))
                .map(|(i, _)| i)
                .collect();
            let metrics = match compute_metrics(&pm.x, &recon, &det.scores, &index) {
                Ok(m) => Some(m),
                Err(e) => {
                    log::warn!("baseline metrics unavailable: {e}");
                    None
                }
            };
            let count = |l: Label| labels.iter().filter(|x| x.label == l).count();
            (
                Some(BaselineSummary {
                    hard: count(Label::Hard),
                    soft: count(Label::Soft),
                    overlap: overlap(&det.ranked, &anomalous, &OVERLAP_DEPTHS),
                    metrics,
                }),
                None,
            )
        }
    };

    let synthetic_truth = loaded.truth.as_ref().map(|truth| {
        let flagged: BTreeSet<&str> = det.ranked.iter().map(String::as_str).collect();
        let top: BTreeSet<&str> = det.ranked.iter().take(50).map(String::as_str).collect();
        let of = |l: TruthLabel| truth.iter().filter(move |(_, v)| **v == l).map(|(id, _)| id.as_str());
        TruthSummary {
            hard_total: of(TruthLabel::Hard).count(),
            hard_flagged: of(TruthLabel::Hard).filter(|id| flagged.contains(id)).count(),
            hard_in_top_50: of(TruthLabel::Hard).filter(|id| top.contains(id)).count(),
            soft_total: of(TruthLabel::Soft).count(),
            soft_flagged: of(TruthLabel::Soft).filter(|id| flagged.contains(id)).count(),
        }
    });

    let summary = RunSummary {
        model: model.tag(),
        k,
        k_scan,
        investors: pm.n_investors(),
        days: pm.n_days(),
        first_day: pm.calendar.first_day().to_string(),
        pse_day: pm.calendar.days()[pm.calendar.pse_index()].to_string(),
        flagged: det.ranked.len(),
        thresholds: &det.thresholds,
        frobenius: recon.frobenius(),
        evs: explained_variance_score(&pm.x, &recon.x_hat)?,
        top_ranked: det.ranked.iter().take(20).map(String::as_str).collect(),
        baseline,
        baseline_skipped,
        synthetic_truth,
    };
    out.write_json("summary", &summary)?;

    println!(
        "{}: {} investors x {} days, K = {k}, eps_theta = {:.4} ({}), n_theta = {:.1}, {} flagged",
        summary.model,
        summary.investors,
        summary.days,
        det.thresholds.epsilon_theta,
        det.thresholds.epsilon_mode.as_str(),
        det.thresholds.n_theta,
        summary.flagged
    );
    if let Some(t) = &summary.synthetic_truth {
        println!(
            "planted hard insiders flagged {}/{} ({} in top 50), soft {}/{}",
            t.hard_flagged, t.hard_total, t.hard_in_top_50, t.soft_flagged, t.soft_total
        );
    }
    if let Some(why) = &summary.baseline_skipped {
        println!("baseline comparison skipped: {why}");
    }
    for path in out.finish()? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let s = generate(&scenario(args.scenario, args.seed))?;
    let mut out = OutputSet::new(&args.out, "synth", args, Some(args.seed))?;
    out.write("transactions", "csv", &csv_bytes(|b| write_transactions(b, &s.records))?)?;
    out.write("truth", "csv", &csv_bytes(|b| s.write_truth_csv(b))?)?;
    println!(
        "{} records, {} investors, {} trading days ({} to {}), event on day {}",
        s.records.len(),
        s.truth.len(),
        s.calendar.len(),
        s.calendar.first_day(),
        s.calendar.last_day(),
        s.calendar.pse_index()
    );
    for path in out.finish()? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn scan_k_cmd(args: &ScanArgs) -> Result<()> {
    let family = family(&args.model)?;
    let cfg = train_config(&args.model, args.seed);
    let pm = positions(&load(&args.input, args.seed)?)?;
    let result = scan(&pm, family, &args.scan, &cfg, &policy(&args.thresholds))?;
    let mut out = OutputSet::new(&args.out, "scan-k", args, Some(args.seed))?;
    out.write("kscan", "csv", &csv_bytes(|b| result.write_csv(b))?)?;
    println!("k  flagged  jaccard");
    for (i, k) in result.ks.iter().enumerate() {
        let j = if i == 0 { String::new() } else { format!("{:.3}", result.jaccard[i - 1]) };
        println!("{k:<3}{:>8}  {j}", result.set_sizes[i]);
    }
    println!(
        "chosen K = {}{}",
        result.chosen_k,
        if result.stable { "" } else { " (no stable run; best single step)" }
    );
    for path in out.finish()? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn baseline(args: &BaselineArgs) -> Result<()> {
    let loaded = load(&args.input, args.seed)?;
    let cfg = BaselineConfig {
        k: args.baseline_opts.baseline_k,
        seed: args.seed,
        n_init: args.baseline_opts.n_init,
    };
    let labels = run_baseline(&loaded.records, &loaded.calendar, &cfg)?;
    let mut out = OutputSet::new(&args.out, "baseline", args, Some(args.seed))?;
    out.write("baseline_labels", "csv", &csv_bytes(|b| write_labels_csv(b, &labels))?)?;
    let count = |l: Label| labels.iter().filter(|x| x.label == l).count();
    println!(
        "{} investors: {} hard, {} soft",
        labels.len(),
        count(Label::Hard),
        count(Label::Soft)
    );
    for path in out.finish()? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn column(headers: &csv::StringRecord, name: &str, file: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Schema(format!("{} has no {name:?} column", file.display())).into())
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(csv::Reader::from_reader(file))
}

fn group_rows(path: &Path) -> Result<Vec<(String, String)>> {
    let mut r = csv_reader(path)?;
    let headers = r.headers().map_err(|e| Error::Schema(e.to_string()))?.clone();
    let (g, t) = (column(&headers, "group", path)?, column(&headers, "investor_type", path)?);
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Schema(e.to_string()))?;
        rows.push((rec[g].trim().to_string(), rec[t].trim().to_string()));
    }
    Ok(rows)
}

fn report_rows(report: &Path, input: &Path) -> Result<Vec<(String, String)>> {
    let types: BTreeMap<String, &'static str> = read_records(input)?
        .into_iter()
        .map(|r| (r.investor_id, r.investor_type.as_str()))
        .collect();
    let mut r = csv_reader(report)?;
    let headers = r.headers().map_err(|e| Error::Schema(e.to_string()))?.clone();
    let (id, flagged) = (column(&headers, "investor_id", report)?, column(&headers, "flagged", report)?);
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Schema(e.to_string()))?;
        let Some(t) = types.get(rec[id].trim()) else {
            return Err(Error::Validation(format!("investor {} missing from {}", &rec[id], input.display())).into());
        };
        let group = if rec[flagged].trim() == "true" { "flagged" } else { "unflagged" };
        rows.push((group.to_string(), t.to_string()));
    }
    Ok(rows)
}

pub fn enrich(args: &EnrichArgs) -> Result<()> {
    let rows = match (&args.groups, &args.report, &args.input) {
        (Some(g), None, _) => group_rows(g)?,
        (None, Some(rep), Some(input)) => report_rows(rep, input)?,
        _ => return Err(Error::Config("give --groups, or --report together with --input".into()).into()),
    };
    let report = enrichment(&compositions(rows), args.alpha)?;
    let mut out = OutputSet::new(&args.out, "enrich", args, None)?;
    out.write_json("enrichment", &report)?;
    if let Some(f) = &report.fisher {
        println!(
            "Fisher exact test {} vs {} by {}/{}: p = {:.3e}",
            f.groups[0], f.groups[1], f.types[0], f.types[1], f.p_value
        );
    }
    for e in &report.expression {
        let tag = match (e.over_expressed, e.under_expressed) {
            (true, _) => "over-expressed",
            (_, true) => "under-expressed",
            _ => "",
        };
        println!(
            "{:<12} {:<10} {:>6}/{:<6} p_over {:.3e} p_under {:.3e} {tag}",
            e.group, e.investor_type, e.observed, e.group_size, e.p_over, e.p_under
        );
    }
    for path in out.finish()? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn check(args: &CheckArgs) -> Result<()> {
    let outcomes = checks::run_all(args.seed)?;
    for c in &outcomes {
        println!(
            "{} {:<20} {:.3e} (tolerance {:.0e}) {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.tolerance,
            c.detail
        );
    }
    if let Some(dir) = &args.out {
        let mut out = OutputSet::new(dir, "check", args, Some(args.seed))?;
        out.write_json("checks", &outcomes)?;
        out.finish()?;
    }
    let failed = outcomes.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        bail!("{failed} check(s) failed");
    }
    Ok(())
}
