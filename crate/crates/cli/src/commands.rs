use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use emoctx_annosvc::server::load_instances;
use emoctx_annosvc::{ServiceConfig, Study};
use emoctx_core::coherence::{batch_coherence, CoherenceConfig};
use emoctx_core::corpus::read_records;
use emoctx_core::emotion::{classify, emotion_report, entropy, top_label, trajectory, DistributionRecord};
use emoctx_core::genpipe::{draw_catalog, generate_event, run_dataset, RecordingBackend};
use emoctx_core::scalar::MeanStd;
use emoctx_core::stats::{
    best_chain_curve, fleiss_kappa, pearson, precision_recall_f1, spearman, AnnotationMatrix,
    ConfusionMatrix,
};
use emoctx_core::tables::{short_decimal, Table};
use emoctx_core::textstats::{diversity, leakage_check, leakage_rate, length_stats, tokenize, SynonymLexicon};
use emoctx_core::{AnnotationRecord, EmotionCategory, EventChain, EventRecord, Method};
use serde::Serialize;

use crate::manifest::Run;
use crate::plots;
use crate::{
    AnnotationInput, ChainsCmd, CoherenceCmd, Command, EmotionCmd, EventsCmd, ExportArgs, ServeArgs,
    StatsCmd,
};

pub fn dispatch(run: &mut Run, command: Command) -> anyhow::Result<()> {
    match command {
        Command::Events(EventsCmd::Generate { count, record }) => events_generate(run, count, record),
        Command::Chains(ChainsCmd::Generate {
            method,
            events,
            resume,
            record,
        }) => chains_generate(run, &method, &events, resume, record),
        Command::Coherence(CoherenceCmd::Score { chains, sample }) => coherence_score(run, &chains, sample),
        Command::Emotion(EmotionCmd::Classify { text, chains, events }) => {
            emotion_classify(run, text, chains, events)
        }
        Command::Emotion(EmotionCmd::Trajectory { chains }) => emotion_trajectory(run, &chains),
        Command::Emotion(EmotionCmd::Report { events, chains }) => emotion_report_cmd(run, &events, &chains),
        Command::Stats(cmd) => stats(run, cmd),
        Command::Serve(args) => serve(run, args),
        Command::Export(args) => export(run, args),
    }
}

fn load<R: emoctx_core::corpus::Record>(run: &mut Run, path: &Path) -> anyhow::Result<Vec<R>> {
    run.input(path);
    let records = read_records(path)?;
    Ok(records)
}

/// Prints an aligned table and writes it as `<stem>.txt` and `<stem>.csv`.
fn emit_table(run: &mut Run, stem: &str, table: &Table) -> anyhow::Result<()> {
    let aligned = table.to_aligned();
    print!("{aligned}");
    run.write_text(&format!("{stem}.txt"), &aligned)?;
    run.write_text(&format!("{stem}.csv"), &table.to_csv())?;
    Ok(())
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

fn events_generate(run: &mut Run, count: usize, record: Option<PathBuf>) -> anyhow::Result<()> {
    if count == 0 {
        bail!("--count must be at least 1");
    }
    let backend = RecordingBackend::new(run.settings.chat_backend()?);
    let pairs = draw_catalog(count, run.settings.seed);
    if pairs.len() < count {
        eprintln!("warning: the catalog only has {} (type, object) pairs", pairs.len());
    }
    let config = run.settings.generation.clone();
    let (events, failures) = run.stage(
        "generate_events",
        || {
            let mut events = Vec::new();
            let mut failures = Vec::new();
            for (ty, obj) in &pairs {
                match generate_event(ty, obj, &config, &backend) {
                    Ok(e) => events.push(e),
                    Err(e) => failures.push(format!("{ty}/{obj}: {e}")),
                }
            }
            Ok((events, failures))
        },
        |(e, _)| Some(e.len()),
    )?;
    for f in &failures {
        eprintln!("warning: {f}");
    }
    if events.is_empty() {
        bail!("no event could be generated ({} failures)", failures.len());
    }
    let path = run.write_jsonl("events.jsonl", &events)?;
    if let Some(p) = record {
        backend.save(&p)?;
        run.add_output(p);
    }
    println!("{} events written to {}", events.len(), path.display());
    Ok(())
}

fn chains_generate(
    run: &mut Run,
    methods: &[Method],
    events_path: &Path,
    resume: Option<PathBuf>,
    record: Option<PathBuf>,
) -> anyhow::Result<()> {
    let events: Vec<EventRecord> = load(run, events_path)?;
    let existing: Vec<EventChain> = match &resume {
        Some(p) if p.exists() => load(run, p)?,
        _ => Vec::new(),
    };
    let methods: BTreeSet<Method> = methods.iter().copied().collect();
    let backend = RecordingBackend::new(run.settings.chat_backend()?);
    let config = run.settings.generation.clone();
    let outcome = run.stage(
        "generate_chains",
        || Ok(run_dataset(&events, &methods, &config, &backend, &existing)?),
        |r| Some(r.chains.len()),
    )?;
    let summary = &outcome.summary;
    for f in &summary.failures {
        eprintln!("warning: {} {} {}: {}", f.event_id, f.method, f.emotion, f.error);
    }
    if summary.generated == 0 && summary.skipped_existing == 0 {
        bail!("no chain could be generated ({} failures)", summary.failures.len());
    }
    let mut all = existing;
    all.extend(outcome.chains.iter().cloned());
    run.write_jsonl("chains.jsonl", &all)?;
    run.write_json("generation_summary.json", summary)?;
    if let Some(p) = record {
        backend.save(&p)?;
        run.add_output(p);
    }
    let mut table = Table::new(["Method", "Chains", "Failures"]);
    for m in &methods {
        let made = outcome.chains.iter().filter(|c| c.method == *m).count();
        let failed = summary.failures.iter().filter(|f| f.method == *m).count();
        table.push([m.display_name().to_owned(), made.to_string(), failed.to_string()]);
    }
    print!("{}", table.to_aligned());
    println!(
        "{} generated, {} already present, {} failed",
        summary.generated,
        summary.skipped_existing,
        summary.failures.len()
    );
    Ok(())
}

fn mean_std_cell(ms: Option<&MeanStd>) -> String {
    match ms {
        Some(ms) => format!("{} ({})", short_decimal(ms.mean), short_decimal(ms.std_dev)),
        None => "-".into(),
    }
}

fn coherence_score(run: &mut Run, chains_path: &Path, sample: Option<usize>) -> anyhow::Result<()> {
    let chains: Vec<EventChain> = load(run, chains_path)?;
    let config = CoherenceConfig {
        sample_target: sample.unwrap_or(run.settings.sample_target),
        seed: run.settings.seed,
    };
    if config.sample_target == 0 {
        bail!("--sample must be at least 1");
    }
    let scorer = run.settings.scorer()?;
    let summary = run.stage(
        "coherence",
        || Ok(batch_coherence(&scorer, &chains, &config)?),
        |s| Some(s.records.len()),
    )?;
    for f in &summary.failures {
        eprintln!("warning: {}: {}", f.chain_id, f.error);
    }
    run.write_lines("coherence.jsonl", &summary.records)?;
    run.write_json("coherence_summary.json", &summary)?;

    let methods: Vec<Method> = summary.by_method.keys().copied().collect();
    let mut table = Table::new(
        std::iter::once("Emotion".to_owned()).chain(methods.iter().map(|m| m.display_name().to_owned())),
    );
    for e in EmotionCategory::ALL {
        let cells = methods
            .iter()
            .map(|m| mean_std_cell(summary.by_cell.get(m).and_then(|c| c.get(&e))));
        table.push(std::iter::once(e.as_str().to_owned()).chain(cells));
    }
    table.push(
        std::iter::once("all".to_owned())
            .chain(methods.iter().map(|m| mean_std_cell(summary.by_method.get(m)))),
    );
    emit_table(run, "coherence", &table)?;
    println!("overall {}", mean_std_cell(Some(&summary.overall)));
    Ok(())
}

fn distribution_table(dist: &emoctx_core::EmotionDistributionF64) -> Table {
    let mut table = Table::new(["Emotion", "p", "log-lik"]);
    let mut rows: Vec<_> = dist.probabilities.iter().collect();
    rows.sort_by(|a, b| b.1.total_cmp(a.1).then(a.0.cmp(b.0)));
    for (e, p) in rows {
        table.push([e.as_str().to_owned(), fmt4(*p), fmt4(dist.raw_log_likelihoods[e])]);
    }
    table
}

fn emotion_classify(
    run: &mut Run,
    text: Option<String>,
    chains: Option<PathBuf>,
    events: Option<PathBuf>,
) -> anyhow::Result<()> {
    let scorer = run.settings.scorer()?;
    if let Some(text) = text {
        let dist = classify::<f64, _>(&scorer, &text)?;
        print!("{}", distribution_table(&dist).to_aligned());
        println!("top {}  entropy {}", top_label(&dist), fmt4(entropy(&dist)));
        run.write_lines("distribution.jsonl", &[DistributionRecord::new("text", 1, &dist)])?;
        return Ok(());
    }
    let mut items: Vec<(String, usize, String)> = Vec::new();
    if let Some(p) = &chains {
        for c in load::<EventChain>(run, p)? {
            items.push((c.id.clone(), c.sentences.len(), c.text()));
        }
    }
    if let Some(p) = &events {
        for e in load::<EventRecord>(run, p)? {
            items.push((e.id, 1, e.text));
        }
    }
    if items.is_empty() {
        bail!("nothing to classify; pass --text, --chains or --events");
    }
    let records = run.stage(
        "classify",
        || {
            let mut out = Vec::new();
            for (id, m, text) in &items {
                match classify::<f64, _>(&scorer, text) {
                    Ok(d) => out.push(DistributionRecord::new(id, *m, &d)),
                    Err(e) => eprintln!("warning: {id}: {e}"),
                }
            }
            Ok(out)
        },
        |r| Some(r.len()),
    )?;
    if records.is_empty() {
        bail!("every classification failed");
    }
    let path = run.write_lines("distributions.jsonl", &records)?;
    println!("{} distributions written to {}", records.len(), path.display());
    Ok(())
}

fn emotion_trajectory(run: &mut Run, chains_path: &Path) -> anyhow::Result<()> {
    let chains: Vec<EventChain> = load(run, chains_path)?;
    let scorer = run.settings.scorer()?;
    let trajectories = run.stage(
        "trajectory",
        || {
            let mut out = Vec::new();
            for c in &chains {
                match trajectory::<f64, _>(&scorer, c) {
                    Ok(t) => out.push((c, t)),
                    Err(e) => eprintln!("warning: {}: {e}", c.id),
                }
            }
            Ok(out)
        },
        |t| Some(t.len()),
    )?;
    if trajectories.is_empty() {
        bail!("no trajectory could be computed");
    }
    let mut records = Vec::new();
    let mut sums: BTreeMap<(Method, usize), (usize, f64, f64)> = BTreeMap::new();
    for (chain, t) in &trajectories {
        for (i, dist) in t.points.iter().enumerate() {
            let m = i + 1;
            records.push(DistributionRecord::new(&chain.id, m, dist));
            let s = sums.entry((chain.method, m)).or_default();
            s.0 += 1;
            s.1 += dist.p(chain.prompted_emotion);
            s.2 += entropy(dist);
        }
    }
    run.write_lines("trajectories.jsonl", &records)?;
    let mut table = Table::new(["method", "m", "n", "p_prompted", "entropy"]);
    for ((method, m), (n, p, h)) in &sums {
        let nf = *n as f64;
        table.push([
            method.as_str().to_owned(),
            m.to_string(),
            n.to_string(),
            fmt4(p / nf),
            fmt4(h / nf),
        ]);
    }
    emit_table(run, "trajectory_means", &table)?;
    run.write_text("plot_trajectory.py", &plots::trajectory_script("trajectory_means.csv"))?;
    Ok(())
}

fn emotion_report_cmd(run: &mut Run, events_path: &Path, chains_path: &Path) -> anyhow::Result<()> {
    let events: Vec<EventRecord> = load(run, events_path)?;
    let chains: Vec<EventChain> = load(run, chains_path)?;
    let scorer = run.settings.scorer()?;
    let report = run.stage(
        "emotion_report",
        || Ok(emotion_report(&scorer, &events, &chains)?),
        |r| Some(r.rows.len()),
    )?;
    for s in &report.skipped {
        eprintln!("warning: {}: {}", s.chain_id, s.error);
    }
    run.write_json("emotion_report.json", &report)?;
    let methods: Vec<Method> = report.methods_overall.keys().copied().collect();
    let mut header = vec!["Emotion".to_owned(), "E".to_owned()];
    for m in &methods {
        header.push(format!("{} B", m.display_name()));
        header.push(format!("{} C", m.display_name()));
    }
    let mut table = Table::new(header);
    for row in &report.rows {
        let mut cells = vec![row.emotion.as_str().to_owned(), short_decimal(row.events)];
        for m in &methods {
            match row.methods.get(m) {
                Some(mm) => {
                    cells.push(short_decimal(mm.backstory));
                    cells.push(short_decimal(mm.chain));
                }
                None => cells.extend(["-".to_owned(), "-".to_owned()]),
            }
        }
        table.push(cells);
    }
    let mut overall = vec!["all".to_owned(), mean_std_cell(Some(&report.events_overall))];
    for m in &methods {
        let o = &report.methods_overall[m];
        overall.push(mean_std_cell(Some(&o.backstory)));
        overall.push(mean_std_cell(Some(&o.chain)));
    }
    table.push(overall);
    emit_table(run, "emotion_report", &table)
}

fn load_annotations(run: &mut Run, input: &AnnotationInput) -> anyhow::Result<Vec<AnnotationRecord>> {
    let records: Vec<AnnotationRecord> = load(run, &input.annotations)?;
    let total = records.len();
    let kept: Vec<_> = records
        .into_iter()
        .filter(|r| input.keep_flagged || r.attention_pass)
        .collect();
    if kept.len() < total {
        eprintln!("note: {} records from flagged annotators ignored", total - kept.len());
    }
    Ok(kept)
}

fn stats(run: &mut Run, cmd: StatsCmd) -> anyhow::Result<()> {
    match cmd {
        StatsCmd::Diversity { chains, events } => {
            let chains: Vec<EventChain> = load(run, &chains)?;
            let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for c in &chains {
                groups
                    .entry(c.method.display_name().to_owned())
                    .or_default()
                    .push(c.backstory().join(" "));
            }
            if let Some(p) = events {
                let events: Vec<EventRecord> = load(run, &p)?;
                groups.insert("Events".into(), events.into_iter().map(|e| e.text).collect());
            }
            let mut table = Table::new(["Set", "n", "D"]);
            let rows = run.stage(
                "diversity",
                || {
                    groups
                        .iter()
                        .map(|(name, texts)| {
                            let toks: Vec<_> = texts.iter().map(|t| tokenize(t)).collect();
                            Ok((name.clone(), texts.len(), diversity::<f64>(&toks)?))
                        })
                        .collect::<anyhow::Result<Vec<_>>>()
                },
                |r| Some(r.len()),
            )?;
            for (name, n, d) in rows {
                table.push([name, n.to_string(), fmt4(d)]);
            }
            emit_table(run, "diversity", &table)
        }
        StatsCmd::Leakage { chains, lexicon } => {
            let chains: Vec<EventChain> = load(run, &chains)?;
            let lexicon = match &lexicon {
                Some(p) => {
                    run.input(p);
                    SynonymLexicon::load(p)?
                }
                None => SynonymLexicon::builtin(),
            };
            let rates = leakage_rate(&chains, &lexicon);
            let leaks: Vec<_> = chains
                .iter()
                .map(|c| leakage_check(c, &lexicon))
                .filter(|r| r.leaks())
                .collect();
            run.write_lines("leaks.jsonl", &leaks)?;
            let mut table = Table::new(["Method", "Leaking", "Chains", "Rate"]);
            for (m, r) in &rates {
                table.push([
                    m.display_name().to_owned(),
                    r.leaking.to_string(),
                    r.total.to_string(),
                    fmt4(r.rate),
                ]);
            }
            emit_table(run, "leakage", &table)
        }
        StatsCmd::Lengths { chains } => {
            let chains: Vec<EventChain> = load(run, &chains)?;
            let stats = length_stats(&chains)?;
            let mut table = Table::new(["Method", "Chains", "s1", "s2", "s3", "s4", "Total"]);
            for (m, s) in &stats {
                let mut row = vec![m.display_name().to_owned(), s.chains.to_string()];
                row.extend(s.position_means.iter().map(|v| format!("{v:.2}")));
                row.push(format!("{:.2}", s.total_mean));
                table.push(row);
            }
            emit_table(run, "lengths", &table)
        }
        StatsCmd::Kappa { input } => {
            let records = load_annotations(run, &input)?;
            let items: Vec<String> = records
                .iter()
                .map(|r| r.instance_id.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let matrix = AnnotationMatrix::from_annotations(&records, &items, input.raters)?;
            let kappa = fleiss_kappa::<f64>(&matrix)?;
            #[derive(Serialize)]
            struct KappaOut {
                items: usize,
                raters: u32,
                kappa: f64,
            }
            run.write_json(
                "kappa.json",
                &KappaOut {
                    items: items.len(),
                    raters: input.raters,
                    kappa,
                },
            )?;
            println!("kappa {}  ({} items, {} raters)", fmt4(kappa), items.len(), input.raters);
            Ok(())
        }
        StatsCmd::Curve { input, chains } => {
            let records = load_annotations(run, &input)?;
            let chains: Vec<EventChain> = load(run, &chains)?;
            let curve = run.stage(
                "curve",
                || Ok(best_chain_curve::<f64>(&records, &chains, input.raters, 1..=EmotionCategory::COUNT)?),
                |c| Some(c.len()),
            )?;
            let mut table = Table::new(["method", "k", "chains", "kappa"]);
            for (m, points) in &curve {
                for p in points {
                    table.push([
                        m.as_str().to_owned(),
                        p.k.to_string(),
                        p.chains.to_string(),
                        p.kappa.map(fmt4).unwrap_or_default(),
                    ]);
                }
            }
            emit_table(run, "kappa_curve", &table)?;
            run.write_text("plot_kappa_curve.py", &plots::curve_script("kappa_curve.csv"))?;
            Ok(())
        }
        StatsCmd::Correlate {
            csv,
            x,
            y,
            annotations,
            distributions,
        } => {
            let (xs, ys) = match (csv, annotations, distributions) {
                (Some(path), _, _) => {
                    run.input(&path);
                    csv_columns(&path, x.as_deref().unwrap_or(""), y.as_deref().unwrap_or(""))?
                }
                (None, Some(a), Some(d)) => {
                    let records: Vec<AnnotationRecord> = load(run, &a)?;
                    run.input(&d);
                    label_share_pairs(&records, &d)?
                }
                _ => bail!("pass --csv with --x and --y, or --annotations with --distributions"),
            };
            let p = pearson(&xs, &ys)?;
            let s = spearman(&xs, &ys)?;
            #[derive(Serialize)]
            struct CorrOut {
                n: usize,
                pearson: emoctx_core::CorrelationF64,
                spearman: emoctx_core::CorrelationF64,
            }
            run.write_json(
                "correlation.json",
                &CorrOut {
                    n: xs.len(),
                    pearson: p,
                    spearman: s,
                },
            )?;
            let mut table = Table::new(["Measure", "r", "p", "n"]);
            for (name, c) in [("pearson", p), ("spearman", s)] {
                table.push([name.to_owned(), fmt4(c.coefficient), format!("{:.3e}", c.p_value), c.n.to_string()]);
            }
            print!("{}", table.to_aligned());
            Ok(())
        }
        StatsCmd::Confusion { input, chains } => {
            let records = load_annotations(run, &input)?;
            let chains: Vec<EventChain> = load(run, &chains)?;
            let by_id: BTreeMap<&str, &EventChain> = chains.iter().map(|c| (c.id.as_str(), c)).collect();
            let mut pairs: BTreeMap<Method, Vec<(EmotionCategory, EmotionCategory)>> = BTreeMap::new();
            for r in &records {
                if let Some(c) = by_id.get(r.instance_id.as_str()) {
                    pairs.entry(c.method).or_default().push((c.prompted_emotion, r.emotion));
                }
            }
            if pairs.is_empty() {
                bail!("no annotation refers to a chain in the chains file");
            }
            let mut summary = Table::new(["Method", "Pairs", "Precision", "Recall", "F1"]);
            for (m, p) in &pairs {
                let cm = ConfusionMatrix::from_pairs(p);
                let scores = precision_recall_f1::<f64>(&cm);
                let mut grid = Table::new(
                    std::iter::once("prompted\\assigned".to_owned())
                        .chain(EmotionCategory::ALL.iter().map(|e| e.as_str().to_owned())),
                );
                for row in EmotionCategory::ALL {
                    grid.push(
                        std::iter::once(row.as_str().to_owned())
                            .chain(EmotionCategory::ALL.iter().map(|&col| cm.get(row, col).to_string())),
                    );
                }
                run.write_text(&format!("confusion_{}.csv", m.as_str()), &grid.to_csv())?;
                let mut prf = Table::new(["emotion", "precision", "recall", "f1"]);
                for (e, s) in &scores.per_class {
                    prf.push([e.as_str().to_owned(), fmt4(s.precision), fmt4(s.recall), fmt4(s.f1)]);
                }
                run.write_text(&format!("prf_{}.csv", m.as_str()), &prf.to_csv())?;
                summary.push([
                    m.display_name().to_owned(),
                    p.len().to_string(),
                    fmt4(scores.macro_avg.precision),
                    fmt4(scores.macro_avg.recall),
                    fmt4(scores.macro_avg.f1),
                ]);
            }
            emit_table(run, "confusion_summary", &summary)
        }
    }
}

fn csv_columns(path: &Path, x: &str, y: &str) -> anyhow::Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{}: no column {name:?}", path.display()))
    };
    let (xi, yi) = (col(x)?, col(y)?);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        let parse = |i: usize| -> anyhow::Result<f64> {
            let raw = row.get(i).unwrap_or("");
            raw.trim()
                .parse()
                .with_context(|| format!("{} row {}: {raw:?} is not a number", path.display(), line + 2))
        };
        xs.push(parse(xi)?);
        ys.push(parse(yi)?);
    }
    Ok((xs, ys))
}

/// For every instance with both annotations and a distribution, pairs each
/// category's model probability with the share of annotators choosing it.
fn label_share_pairs(records: &[AnnotationRecord], dist_path: &Path) -> anyhow::Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(dist_path).with_context(|| format!("reading {}", dist_path.display()))?;
    let mut dists: BTreeMap<String, DistributionRecord> = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let d: DistributionRecord = serde_json::from_str(line)
            .with_context(|| format!("{} line {}", dist_path.display(), i + 1))?;
        // Trajectory files hold every prefix; keep the longest.
        match dists.get(&d.instance_id) {
            Some(prev) if prev.m >= d.m => {}
            _ => {
                dists.insert(d.instance_id.clone(), d);
            }
        }
    }
    let mut votes: BTreeMap<&str, [u32; EmotionCategory::COUNT]> = BTreeMap::new();
    for r in records {
        votes.entry(&r.instance_id).or_insert([0; EmotionCategory::COUNT])[r.emotion.index()] += 1;
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (id, counts) in &votes {
        let Some(d) = dists.get(*id) else { continue };
        let total: u32 = counts.iter().sum();
        for e in EmotionCategory::ALL {
            let p = *d
                .probabilities
                .get(e.as_str())
                .ok_or_else(|| anyhow!("{id}: distribution lacks {e}"))?;
            xs.push(p);
            ys.push(f64::from(counts[e.index()]) / f64::from(total));
        }
    }
    if xs.is_empty() {
        bail!("no instance has both annotations and a distribution");
    }
    Ok((xs, ys))
}

fn service_config(run: &Run, events: Option<PathBuf>, chains: Option<PathBuf>) -> anyhow::Result<ServiceConfig> {
    let mut cfg = run.settings.service.clone().with_overrides(std::env::vars())?;
    if events.is_some() {
        cfg.events = events;
    }
    if chains.is_some() {
        cfg.chains = chains;
    }
    if cfg.events.is_none() && cfg.chains.is_none() {
        bail!("the study needs --events and/or --chains");
    }
    Ok(cfg)
}

fn serve(run: &mut Run, args: ServeArgs) -> anyhow::Result<()> {
    let mut cfg = service_config(run, args.events, args.chains)?;
    if let Some(b) = args.bind {
        cfg.bind = b;
    }
    if args.store.is_some() {
        cfg.store_dir = args.store;
    }
    if args.static_dir.is_some() {
        cfg.static_dir = args.static_dir;
    }
    for p in cfg.events.iter().chain(&cfg.chains) {
        run.input(p);
    }
    run.seed("study", cfg.study.seed);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(emoctx_annosvc::serve(cfg))?;
    Ok(())
}

fn export(run: &mut Run, args: ExportArgs) -> anyhow::Result<()> {
    let cfg = service_config(run, args.events, args.chains)?;
    for p in cfg.events.iter().chain(&cfg.chains) {
        run.input(p);
    }
    run.input(&args.store);
    if !args.store.is_dir() {
        bail!("store directory {} does not exist", args.store.display());
    }
    let instances = load_instances(&cfg)?;
    let study = Study::open(cfg.study.clone(), instances, &args.store)?;
    let bundle = study.export();
    run.write_jsonl("annotations.jsonl", &bundle.records)?;
    run.write_json("completeness.json", &bundle.report)?;
    if let Some(m) = &bundle.matrix {
        run.write_json("matrix.json", m)?;
    }
    println!(
        "{} records, {} complete instances, {} short",
        bundle.records.len(),
        bundle.report.complete.len(),
        bundle.report.shortfalls.len()
    );
    Ok(())
}
