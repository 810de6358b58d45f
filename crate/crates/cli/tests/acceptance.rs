//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.
//!
//! Run with `cargo test -p emoctx-cli --test acceptance`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::time::{Duration, Instant};

use emoctx_annosvc::{router, AppState, InstanceKind, NextTask, Study, StudyConfig, StudyInstance, SubmitRequest};
use emoctx_core::coherence::{sample_permutations, shuffle_test};
use emoctx_core::corpus::{assemble_chain, read_records, to_line, validate_dataset};
use emoctx_core::emotion::{classify, entropy, trajectory, EmotionDistribution};
use emoctx_core::genpipe::{run_dataset, ChatMessage, FixtureBackend, GenerationConfig};
use emoctx_core::likelihood::{default_scorer, train_ngram, LikelihoodBackend, SequenceScore};
use emoctx_core::stats::{best_chain_curve, fleiss_kappa, pearson, spearman, AnnotationMatrix};
use emoctx_core::textstats::{
    diversity, jaccard, leakage_check, leakage_rate, length_stats, tokenize, unigram_counts, SynonymLexicon,
    TokenList,
};
use emoctx_core::{AnnotationRecord, EmotionCategory, EventChain, EventRecord, Method, Rational};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    let took = start.elapsed();
    if took > limit {
        Err(format!("took {took:.1?}, limit {limit:?}"))
    } else {
        Ok(took)
    }
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..rest.len() {
            let x = rest.remove(i);
            prefix.push(x);
            go(prefix, rest, out);
            prefix.pop();
            rest.insert(i, x);
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut (0..n).collect(), &mut out);
    out
}

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

fn event(text: &str) -> EventRecord {
    EventRecord::new("Competition", "communication tools", text)
}

// ---------------------------------------------------------------------------

fn coherence_oracle() -> Check {
    let start = Instant::now();
    let scorer = default_scorer();
    let pool: Vec<&str> = emoctx_core::likelihood::toy_corpus();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut compared = 0;
    // A single sentence has nothing to shuffle and is rejected up front.
    for l in 2..=4 {
        for _ in 0..50 {
            let sentences: Vec<&str> = pool.choose_multiple(&mut rng, l).copied().collect();
            let full = factorial(l);
            let seed = rng.gen();
            let sample = sample_permutations(l, full, seed).map_err(|e| e.to_string())?;
            let got: BTreeSet<Vec<usize>> = sample.orderings.iter().cloned().collect();
            let exhaustive = all_permutations(l);
            ensure!(got == exhaustive.iter().cloned().collect(), "l={l}: sample misses permutations");
            ensure!(sample.orderings[0] == (0..l).collect::<Vec<_>>(), "l={l}: original not first");

            let result = shuffle_test::<Rational, _, _>(&scorer, "c", &sentences, full, seed)
                .map_err(|e| e.to_string())?;
            let score = |o: &Vec<usize>| {
                let text: Vec<&str> = o.iter().map(|&i| sentences[i]).collect();
                scorer.sequence_log_prob(&text.join(" ")).unwrap().total_log_prob
            };
            let original = score(&(0..l).collect());
            let scores: Vec<f64> = exhaustive.iter().map(score).collect();
            let rank = scores.iter().filter(|&&s| s >= original).count();
            let below = scores.iter().filter(|&&s| s < original).count();
            ensure!(result.rank == rank, "l={l}: rank {} vs exhaustive {rank}", result.rank);
            ensure!(
                result.score == Rational::new(below as i128, full as i128),
                "l={l}: H {} vs exhaustive {below}/{full}",
                result.score
            );
            compared += 1;
        }
    }

    let mut bounded = 0;
    for i in 0..1000 {
        let l = rng.gen_range(2..=7);
        let sentences: Vec<&str> = (0..l).map(|_| *pool.choose(&mut rng).unwrap()).collect();
        let r = shuffle_test::<Rational, _, _>(&scorer, "r", &sentences, 30, i).map_err(|e| e.to_string())?;
        let n = r.sample_size as i128;
        ensure!(r.sample_size == 30.min(factorial(l)), "chain {i}: sample size {}", r.sample_size);
        ensure!(
            r.score >= Rational::from_integer(0) && r.score <= Rational::new(n - 1, n),
            "chain {i}: H = {} outside [0, 1 - 1/{n}]",
            r.score
        );
        bounded += 1;
    }
    let took = within(Duration::from_secs(30), start)?;
    Ok(format!("{compared} chains match exhaustive ranks; H bounded on {bounded} chains; {took:.1?}"))
}

/// Sentences are consecutive runs of a walk through a fixed successor cycle.
struct Grammar {
    successor: Vec<usize>,
}

impl Grammar {
    const WORDS: usize = 60;
    const SENTENCE: usize = 4;

    fn new(rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..Self::WORDS).collect();
        order.shuffle(rng);
        let mut successor = vec![0; Self::WORDS];
        for i in 0..Self::WORDS {
            successor[order[i]] = order[(i + 1) % Self::WORDS];
        }
        Self { successor }
    }

    fn chain(&self, start: usize, sentences: usize) -> Vec<String> {
        let mut w = start;
        (0..sentences)
            .map(|_| {
                (0..Self::SENTENCE)
                    .map(|_| {
                        let word = format!("w{w}");
                        w = self.successor[w];
                        word
                    })
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect()
    }
}

fn shuffle_discrimination() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let grammar = Grammar::new(&mut rng);
    let corpus: Vec<String> = (0..Grammar::WORDS)
        .map(|s| grammar.chain(s, 5).join(" "))
        .collect();
    let bigram = train_ngram(&corpus, 2, 0.01).map_err(|e| e.to_string())?;
    let unigram = train_ngram(&corpus, 1, 0.01).map_err(|e| e.to_string())?;

    let mut ordered = Vec::new();
    let mut shuffled = Vec::new();
    for _ in 0..50 {
        let chain = grammar.chain(rng.gen_range(0..Grammar::WORDS), 5);
        let mut perm = chain.clone();
        while perm == chain {
            perm.shuffle(&mut rng);
        }
        ordered.push(chain);
        shuffled.push(perm);
    }
    let mean_h = |model: &emoctx_core::likelihood::NGramModel, chains: &[Vec<String>]| -> Result<(f64, Vec<f64>), String> {
        let hs = chains
            .iter()
            .enumerate()
            .map(|(i, c)| {
                shuffle_test::<f64, _, _>(model, "g", c, 30, i as u64)
                    .map(|r| r.score)
                    .map_err(|e| e.to_string())
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok((hs.iter().sum::<f64>() / hs.len() as f64, hs))
    };
    let (h_ordered, _) = mean_h(&bigram, &ordered)?;
    let (h_shuffled, _) = mean_h(&bigram, &shuffled)?;
    let (_, uni_ordered) = mean_h(&unigram, &ordered)?;
    let (_, uni_shuffled) = mean_h(&unigram, &shuffled)?;
    ensure!(h_ordered >= 0.8, "ordered mean H {h_ordered:.3} < 0.8");
    ensure!(h_shuffled <= 0.55, "shuffled mean H {h_shuffled:.3} > 0.55");
    let nonzero = uni_ordered.iter().chain(&uni_shuffled).filter(|&&h| h != 0.0).count();
    ensure!(nonzero == 0, "unigram backend: {nonzero} chains with H != 0");
    let took = within(Duration::from_secs(60), start)?;
    Ok(format!(
        "ordered {h_ordered:.3} >= .8, shuffled {h_shuffled:.3} <= .55, unigram H = 0 on 100 chains; {took:.1?}"
    ))
}

fn toks(words: &[&str]) -> TokenList {
    tokenize(&words.join(" "))
}

fn diversity_exactness() -> Check {
    let loud = tokenize("The loudspeaker suddenly malfunctioned and went silent.");
    ensure!(
        loud.tokens() == ["the", "loudspeaker", "suddenly", "malfunctioned", "and", "went", "silent"],
        "loudspeaker tokens {:?}",
        loud.tokens()
    );
    ensure!(tokenize("").is_empty(), "empty text has tokens");
    ensure!(tokenize("company's").tokens() == ["companys"], "apostrophe handling");

    let r = |n, d| Rational::new(n, d);
    let abc = toks(&["a", "b", "c"]);
    let bcd = toks(&["b", "c", "d"]);
    let j = |a: &TokenList, b: &TokenList| jaccard::<Rational>(a, b).map_err(|e| e.to_string());
    ensure!(j(&abc, &bcd)? == r(1, 2), "J(abc, bcd) != 1/2");
    ensure!(j(&abc, &abc)? == r(1, 1), "J(a, a) != 1");
    ensure!(j(&abc, &toks(&["x", "y"]))? == r(0, 1), "disjoint J != 0");
    ensure!(jaccard::<Rational>(&tokenize(""), &tokenize("")).is_err(), "J of two empty lists defined");
    let d = |b: &[TokenList]| diversity::<Rational>(b).map_err(|e| e.to_string());
    ensure!(d(&[abc.clone()])? == r(0, 1), "D of one text != 0");
    ensure!(d(&[abc.clone(), toks(&["x", "y"])])? == r(1, 2), "D of two disjoint texts != 1/2");

    let ranked = unigram_counts(&["a b", "b c"], &Default::default());
    ensure!(
        ranked == [("b".to_owned(), 2), ("a".to_owned(), 1), ("c".to_owned(), 1)],
        "unigram counts {ranked:?}"
    );
    let stop: std::collections::HashSet<String> = ["b".to_owned()].into();
    ensure!(
        unigram_counts(&["a b", "b c"], &stop) == [("a".to_owned(), 1), ("c".to_owned(), 1)],
        "stopword filtering"
    );
    let four = vec!["one two three four".to_owned(); 4];
    let chain = assemble_chain(&event("It ended."), four, Method::Pc, EmotionCategory::Joy, None)
        .map_err(|e| e.to_string())?;
    let ls = length_stats(&[chain]).map_err(|e| e.to_string())?;
    let s = &ls[&Method::Pc];
    ensure!(s.position_means == [4.0; 4] && s.total_mean == 16.0, "length stats {s:?}");

    let vocab = ["a", "b", "c", "d", "e", "f"];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for c in 0..500 {
        let n = rng.gen_range(1..=8);
        let corpus: Vec<TokenList> = (0..n)
            .map(|_| {
                let len = rng.gen_range(1..=6);
                toks(&(0..len).map(|_| *vocab.choose(&mut rng).unwrap()).collect::<Vec<_>>())
            })
            .collect();
        let value = d(&corpus)?;
        let upper = r(1, 1) - r(1, n as i128);
        ensure!(value >= r(0, 1) && value <= upper, "corpus {c}: D = {value} outside [0, {upper}]");
        let mut rev = corpus.clone();
        rev.reverse();
        ensure!(d(&rev)? == value, "corpus {c}: D depends on order");
    }
    Ok("all hand values exact; 0 <= D <= 1 - 1/n on 500 random corpora".into())
}

const WORKED_GUILT: [&str; 4] = [
    "I had been tasked with testing the loudspeaker system before the big event.",
    "My supervisor warned me that a malfunction would be disastrous for the company's reputation.",
    "I skipped the recommended final check to grab a quick lunch before the event started.",
    "The event host began the ceremony, and the loudspeaker was working perfectly, filling me with temporary relief.",
];

fn guilt_chain(backstory: [&str; 4], method: Method) -> Result<EventChain, String> {
    assemble_chain(
        &event("The loudspeaker suddenly malfunctioned and went silent."),
        backstory.iter().map(|s| s.to_string()).collect(),
        method,
        EmotionCategory::Guilt,
        None,
    )
    .map_err(|e| e.to_string())
}

fn leakage() -> Check {
    let lexicon = SynonymLexicon::builtin();
    let clean = guilt_chain(WORKED_GUILT, Method::Baseline)?;
    ensure!(!leakage_check(&clean, &lexicon).leaks(), "worked guilt chain leaks");
    let mut injected = WORKED_GUILT;
    injected[2] = "I skipped the final check and felt a pang of remorse.";
    let report = leakage_check(&guilt_chain(injected, Method::Baseline)?, &lexicon);
    ensure!(report.matches.len() == 1, "{} leaks after injecting remorse", report.matches.len());
    ensure!(report.matches[0].term == "remorse", "matched {:?}", report.matches[0].term);

    // Constructed set: per method (clean, leaking) chain counts.
    let plan = [(Method::Baseline, 9, 1), (Method::Pc, 5, 0), (Method::Pcr, 2, 3)];
    let mut chains = Vec::new();
    for (method, clean_n, leak_n) in plan {
        for i in 0..clean_n + leak_n {
            let mut b = WORKED_GUILT;
            let variant = format!("I had been tasked with testing speaker {i} before the big event.");
            b[0] = &variant;
            let leaked = format!("Later I felt remorse about skipping check {i}.");
            if i >= clean_n {
                b[1] = &leaked;
            }
            chains.push(guilt_chain(b, method)?);
        }
    }
    let rates = leakage_rate(&chains, &lexicon);
    for (method, clean_n, leak_n) in plan {
        let r = rates[&method];
        ensure!(
            r.leaking == leak_n && r.total == clean_n + leak_n,
            "{method}: {}/{} instead of {leak_n}/{}",
            r.leaking,
            r.total,
            clean_n + leak_n
        );
        ensure!(r.rate == leak_n as f64 / (clean_n + leak_n) as f64, "{method}: rate {}", r.rate);
    }
    let empty = SynonymLexicon::from_entries(BTreeMap::new());
    ensure!(!leakage_check(&guilt_chain(injected, Method::Pc)?, &empty).leaks(), "empty lexicon leaks");
    Ok("worked chain clean, remorse gives 1 leak, rates 1/10, 0/5, 3/5 exact".into())
}

/// Kappa from per-item rater labels by enumerating ordered rater pairs.
fn brute_kappa(items: &[Vec<usize>]) -> Option<Rational> {
    let n = items[0].len() as i128;
    let big_n = items.len() as i128;
    let mut agree = Rational::from_integer(0);
    let mut totals: HashMap<usize, i128> = HashMap::new();
    for labels in items {
        let mut pairs = 0;
        for (a, la) in labels.iter().enumerate() {
            for (b, lb) in labels.iter().enumerate() {
                if a != b && la == lb {
                    pairs += 1;
                }
            }
            *totals.entry(*la).or_default() += 1;
        }
        agree += Rational::new(pairs, n * (n - 1));
    }
    let p_bar = agree / Rational::from_integer(big_n);
    let pe: Rational = totals
        .values()
        .map(|&c| {
            let p = Rational::new(c, big_n * n);
            p * p
        })
        .sum();
    if pe == Rational::from_integer(1) {
        return None;
    }
    Some((p_bar - pe) / (Rational::from_integer(1) - pe))
}

fn matrix_of(items: &[Vec<usize>]) -> Result<AnnotationMatrix, String> {
    let counts: Vec<[u32; 13]> = items
        .iter()
        .map(|labels| {
            let mut row = [0; 13];
            for &l in labels {
                row[l] += 1;
            }
            row
        })
        .collect();
    let ids = (0..items.len()).map(|i| format!("i{i}")).collect();
    AnnotationMatrix::new(ids, counts).map_err(|e| e.to_string())
}

fn ts() -> chrono::DateTime<chrono::Utc> {
    "2026-01-05T10:00:00Z".parse().unwrap()
}

fn kappa_and_correlation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut undefined = 0;
    for m in 0..200 {
        let items_n = rng.gen_range(1..=12);
        let raters = rng.gen_range(2..=6);
        let cats = rng.gen_range(1..=13);
        let items: Vec<Vec<usize>> = (0..items_n)
            .map(|_| (0..raters).map(|_| rng.gen_range(0..cats)).collect())
            .collect();
        let matrix = matrix_of(&items)?;
        match (brute_kappa(&items), fleiss_kappa::<f64>(&matrix)) {
            (Some(expected), Ok(got)) => {
                let e = *expected.numer() as f64 / *expected.denom() as f64;
                worst = worst.max((got - e).abs());
                ensure!((got - e).abs() <= 1e-12, "matrix {m}: {got} vs {e}");
            }
            (None, Err(_)) => undefined += 1,
            (e, g) => return Err(format!("matrix {m}: oracle {e:?}, implementation {g:?}")),
        }
    }

    let hand = vec![vec![5, 5, 3], vec![3, 3, 5]];
    let k = fleiss_kappa::<Rational>(&matrix_of(&hand)?).map_err(|e| e.to_string())?;
    ensure!(k == Rational::new(-1, 3), "hand case kappa {k}");

    let x = [1.0, 2.0, 3.0, 4.0];
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let r = |res: Result<emoctx_core::CorrelationF64, _>| res.map(|c| c.coefficient).map_err(|e: emoctx_core::Error| e.to_string());
    ensure!(close(r(spearman(&x, &[1.0, 3.0, 2.0, 4.0]))?, 0.8), "spearman hand case");
    ensure!(close(r(spearman(&x, &x))?, 1.0), "spearman y = x");
    ensure!(close(r(spearman(&x, &x.map(|v| -v)))?, -1.0), "spearman y = -x");
    ensure!(close(r(pearson(&x, &x.map(|v| 2.0 * v + 1.0)))?, 1.0), "pearson y = 2x + 1");
    ensure!(close(r(pearson(&x, &x.map(|v| -v)))?, -1.0), "pearson y = -x");
    ensure!(spearman(&x, &[2.0; 4]).is_err(), "constant input accepted");

    // Curve: random labels over 4 events x 13 chains x 3 raters.
    let mut records = Vec::new();
    let mut chains = Vec::new();
    for ev in 0..4 {
        let e = event(&format!("Event number {ev} happened."));
        for emo in EmotionCategory::ALL {
            let b = (1..=4).map(|k| format!("Sentence {k} for {emo}.")).collect();
            let c = assemble_chain(&e, b, Method::Pcr, emo, None).map_err(|e| e.to_string())?;
            for a in 0..3 {
                let label = EmotionCategory::from_index(rng.gen_range(0..13)).unwrap();
                records.push(AnnotationRecord::new(c.id.clone(), format!("a{a}"), label, ts()));
            }
            chains.push(c);
        }
    }
    let ids: Vec<String> = chains.iter().map(|c| c.id.clone()).collect();
    let full = fleiss_kappa::<Rational>(
        &AnnotationMatrix::from_annotations(&records, &ids, 3).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let curve = best_chain_curve::<Rational>(&records, &chains, 3, 13..=13).map_err(|e| e.to_string())?;
    let at13 = &curve[&Method::Pcr][0];
    ensure!(at13.k == 13 && at13.chains == 52, "curve point {at13:?}");
    ensure!(at13.kappa == Some(full), "curve(13) {:?} vs full {full}", at13.kappa);
    Ok(format!(
        "200 matrices within {worst:.1e} of brute force ({undefined} undefined on both); kappa = -1/3 exact; correlations exact to 1e-12; curve(13) = {full}"
    ))
}

struct UniformBackend;

impl LikelihoodBackend for UniformBackend {
    fn sequence_log_prob(&self, text: &str) -> emoctx_core::Result<SequenceScore> {
        Ok(SequenceScore {
            text: text.to_owned(),
            token_count: 1,
            total_log_prob: -3.0,
        })
    }

    fn score_continuation(&self, _: &[ChatMessage], _: &str) -> emoctx_core::Result<f64> {
        Ok(-3.0)
    }
}

fn emotion_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let spread = [1.0, 10.0, 100.0, 1000.0][i % 4];
        let raw: [f64; 13] = std::array::from_fn(|_| -rng.gen::<f64>() * spread);
        let d = EmotionDistribution::<f64>::from_log_likelihoods(raw).map_err(|e| e.to_string())?;
        let total: f64 = d.probabilities.values().sum();
        worst = worst.max((total - 1.0).abs());
        ensure!((total - 1.0).abs() <= 1e-9, "output {i}: sum {total}");
    }

    let uniform = classify::<f64, _>(&UniformBackend, "Anything at all.").map_err(|e| e.to_string())?;
    ensure!(
        uniform.probabilities.values().all(|&p| p == 1.0 / 13.0),
        "uniform backend: {:?}",
        uniform.probabilities
    );
    let one_hot = EmotionDistribution::<f64>::from_probabilities(std::array::from_fn(|i| if i == 5 { 1.0 } else { 0.0 }))
        .map_err(|e| e.to_string())?;
    let h0 = entropy(&one_hot);
    let h13 = entropy(&uniform);
    ensure!(h0 == 0.0, "one-hot entropy {h0}");
    ensure!((h13 - 13f64.ln()).abs() <= 1e-15, "uniform entropy {h13} vs ln 13 {}", 13f64.ln());

    let scorer = default_scorer();
    let chains: Vec<EventChain> = {
        let events: Vec<EventRecord> = read_records(fixture("events.jsonl")).map_err(|e| e.to_string())?;
        let backend = FixtureBackend::load(fixture("transcript.jsonl")).map_err(|e| e.to_string())?;
        let run = run_dataset(&events[..2], &Method::ALL.into(), &GenerationConfig::default(), &backend, &[])
            .map_err(|e| e.to_string())?;
        run.chains
    };
    for c in &chains {
        let t = trajectory::<f64, _>(&scorer, c).map_err(|e| e.to_string())?;
        let b = classify::<f64, _>(&scorer, &c.backstory().join(" ")).map_err(|e| e.to_string())?;
        ensure!(t.points.len() == 5, "{}: {} points", c.id, t.points.len());
        ensure!(t.points[3] == b, "{}: point 4 differs from backstory classification", c.id);
    }
    Ok(format!(
        "sum within {worst:.1e} on 1000 outputs; uniform 1/13; entropy 0 and ln 13; point 4 = backstory on {} chains",
        chains.len()
    ))
}

fn pipeline_determinism() -> Check {
    let events: Vec<EventRecord> = read_records(fixture("events.jsonl")).map_err(|e| e.to_string())?;
    ensure!(events.len() == 10, "{} fixture events", events.len());
    let methods: BTreeSet<Method> = Method::ALL.into();
    let config = GenerationConfig::default();
    let once = || -> Result<(Vec<EventChain>, String), String> {
        let backend = FixtureBackend::load(fixture("transcript.jsonl")).map_err(|e| e.to_string())?;
        let run = run_dataset(&events, &methods, &config, &backend, &[]).map_err(|e| e.to_string())?;
        ensure!(run.summary.failures.is_empty(), "{} failed cells", run.summary.failures.len());
        let mut bytes = String::new();
        for c in &run.chains {
            bytes.push_str(&to_line(c).map_err(|e| e.to_string())?);
            bytes.push('\n');
        }
        Ok((run.chains, bytes))
    };
    let (chains, first) = once()?;
    let (_, second) = once()?;
    ensure!(chains.len() == 390, "{} chains", chains.len());
    let by_id: HashMap<&str, &EventRecord> = events.iter().map(|e| (e.id.as_str(), e)).collect();
    for c in &chains {
        ensure!(c.final_event() == by_id[c.event_id.as_str()].text, "{}: s5 not verbatim", c.id);
    }
    validate_dataset(&events, &chains).map_err(|e| e.to_string())?;
    ensure!(first == second, "two runs differ");
    Ok(format!("390 chains, verbatim s5, {} identical bytes across two runs", first.len()))
}

async fn spawn(study: Study) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(AppState::new(study), None);
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}")
}

fn chain_instances(n: usize) -> Vec<StudyInstance> {
    (0..n)
        .map(|i| StudyInstance {
            id: format!("ch-{i:02}"),
            kind: InstanceKind::Chain,
            sentences: (1..=5).map(|k| format!("Sentence {k} of chain {i}.")).collect(),
        })
        .collect()
}

/// Works through a session over HTTP, answering real items with `label`.
async fn annotate(client: &reqwest::Client, base: &str, annotator: &str, label: impl Fn(&str) -> EmotionCategory) -> Result<usize, String> {
    let resp = client
        .post(format!("{base}/api/sessions"))
        .json(&serde_json::json!({ "annotator_id": annotator }))
        .send()
        .await
        .map_err(|e| e.to_string())?;
    let body: serde_json::Value = resp.json().await.map_err(|e| e.to_string())?;
    let sid = body["session_id"].as_str().ok_or("no session id")?.to_owned();
    let mut done = 0;
    loop {
        let next: NextTask = client
            .get(format!("{base}/api/sessions/{sid}/next"))
            .send()
            .await
            .map_err(|e| e.to_string())?
            .json()
            .await
            .map_err(|e| e.to_string())?;
        let task = match next {
            NextTask::Task { task } => task,
            NextTask::Complete => return Ok(done),
        };
        let emotion = match &task.instruction {
            Some(i) => i.split('"').nth(1).ok_or("instruction")?.parse().map_err(|e: emoctx_core::Error| e.to_string())?,
            None => {
                done += 1;
                label(&task.instance_id)
            }
        };
        let mut req = SubmitRequest::new(task.task_id.clone(), emotion);
        if task.kind == InstanceKind::Chain {
            req.influence = Some(false);
            req.realism = Some(3);
        }
        let status = client
            .post(format!("{base}/api/sessions/{sid}/annotations"))
            .json(&req)
            .send()
            .await
            .map_err(|e| e.to_string())?
            .status();
        ensure!(status.is_success(), "submit returned {status}");
    }
}

fn study_replay() -> Check {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(async {
        let client = reqwest::Client::new();
        // Scripted labels: annotator a gives SCRIPT[a][chain].
        const SCRIPT: [[usize; 10]; 3] = [
            [0, 1, 2, 3, 5, 5, 6, 7, 8, 12],
            [0, 1, 2, 4, 5, 6, 6, 7, 9, 12],
            [0, 2, 2, 4, 5, 7, 8, 7, 9, 11],
        ];
        let base = spawn(Study::new(StudyConfig::default(), chain_instances(10)).map_err(|e| e.to_string())?).await;
        for (a, row) in SCRIPT.iter().enumerate() {
            let n = annotate(&client, &base, &format!("scripted-{a}"), |id| {
                let i: usize = id[3..].parse().unwrap();
                EmotionCategory::from_index(row[i]).unwrap()
            })
            .await?;
            ensure!(n == 10, "annotator {a} labelled {n} chains");
        }
        let bundle: emoctx_annosvc::ExportBundle = client
            .get(format!("{base}/api/admin/export"))
            .send()
            .await
            .map_err(|e| e.to_string())?
            .json()
            .await
            .map_err(|e| e.to_string())?;
        let ids: Vec<String> = (0..10).map(|i| format!("ch-{i:02}")).collect();
        let matrix = AnnotationMatrix::from_annotations(&bundle.records, &ids, 3).map_err(|e| e.to_string())?;
        let got = fleiss_kappa::<Rational>(&matrix).map_err(|e| e.to_string())?;
        let items: Vec<Vec<usize>> = (0..10).map(|i| SCRIPT.iter().map(|row| row[i]).collect()).collect();
        let expected = brute_kappa(&items).ok_or("oracle kappa undefined")?;
        ensure!(got == expected, "exported kappa {got} vs scripted {expected}");

        let base = spawn(Study::new(StudyConfig::default(), chain_instances(10)).map_err(|e| e.to_string())?).await;
        let mut handles = Vec::new();
        for s in 0..20 {
            let client = client.clone();
            let base = base.clone();
            handles.push(tokio::spawn(async move {
                annotate(&client, &base, &format!("crowd-{s}"), |_| EmotionCategory::Joy).await
            }));
        }
        let mut total = 0;
        for h in handles {
            total += h.await.map_err(|e| e.to_string())??;
        }
        let progress: emoctx_annosvc::Progress = client
            .get(format!("{base}/api/admin/progress"))
            .send()
            .await
            .map_err(|e| e.to_string())?
            .json()
            .await
            .map_err(|e| e.to_string())?;
        let bundle: emoctx_annosvc::ExportBundle = client
            .get(format!("{base}/api/admin/export"))
            .send()
            .await
            .map_err(|e| e.to_string())?
            .json()
            .await
            .map_err(|e| e.to_string())?;
        let mut per: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &bundle.records {
            *per.entry(&r.instance_id).or_default() += 1;
        }
        let max = per.values().copied().max().unwrap_or(0);
        ensure!(max <= 3, "an instance has {max} annotations");
        ensure!(total == 30 && progress.complete_instances == 10, "{total} labels, {} complete", progress.complete_instances);
        Ok(format!("exported kappa = {expected} (brute force); 20 sessions, max 3 per instance"))
    })
}

fn main() {
    let checks: [(&str, fn() -> Check); 8] = [
        ("coherence oracle", coherence_oracle),
        ("shuffle-test discrimination", shuffle_discrimination),
        ("diversity and tokenization", diversity_exactness),
        ("leakage", leakage),
        ("kappa and correlation oracles", kappa_and_correlation),
        ("emotion distribution invariants", emotion_invariants),
        ("pipeline determinism", pipeline_determinism),
        ("study replay", study_replay),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria pass", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
