//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod support;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use parking_lot::Mutex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bioqa_core::corpus::{parse_dataset, plan_hyperparameters, AnswerLabel, Dataset, QaMode};
use bioqa_core::index::{build_index, index_records, save_index_file, ChunkField, ChunkPolicy, KnowledgeChunk};
use bioqa_core::llm::{Backend, ChatRequest, FinishReason, LlmError, ModelResponse, Role};
use bioqa_core::metrics::{bleu, response_distribution, rouge_l, rouge_n, BLEU_MAX_ORDER};
use bioqa_core::pairwise::{sample_pairs, Choice, Criterion, PairwiseStore, Rating, Side};
use bioqa_core::prompts::{extract_answer, profile_for, ExtractedAnswer, ProfileMode};
use bioqa_core::runner::{run_eval, run_eval_with, sweep_topk_with, RunConfig, ACCURACY, CORRECT};
use support::{fixture, oracle};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn metric_oracle() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst = 0.0f64;
    let mut cands = Vec::new();
    let mut refs = Vec::new();
    for _ in 0..200 {
        let vocab = rng.random_range(1..=12);
        let c = support::segment(&mut rng, vocab, 15);
        let r = support::segment(&mut rng, vocab, 15);
        for (ours, theirs) in [
            (rouge_n(&c, &r, 1).0, oracle::rouge_n(&c, &r, 1)),
            (rouge_n(&c, &r, 2).0, oracle::rouge_n(&c, &r, 2)),
            (rouge_l(&c, &r).0, oracle::rouge_l(&c, &r)),
        ] {
            worst = worst.max((ours - theirs).abs());
        }
        let (b, _) = bleu(&[&c], &[&r], BLEU_MAX_ORDER).map_err(err)?;
        worst = worst.max((b.0 - oracle::bleu(std::slice::from_ref(&c), std::slice::from_ref(&r))).abs());
        cands.push(c);
        refs.push(r);
    }
    let (corpus, _) = bleu(&cands, &refs, BLEU_MAX_ORDER).map_err(err)?;
    worst = worst.max((corpus.0 - oracle::bleu(&cands, &refs)).abs());
    let elapsed = started.elapsed();
    ensure!(worst <= 1e-9, "max deviation {worst:e}");
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("200 pairs, max deviation {worst:e}, {elapsed:.2?}"))
}

fn bleu_worked_example() -> Check {
    let (score, comp) = bleu(&["the cat sat on"], &["the cat sat on the mat"], BLEU_MAX_ORDER).map_err(err)?;
    ensure!((score.0 - 60.65).abs() <= 0.01, "score {}", score.0);
    ensure!((comp.bp - (-0.5f64).exp()).abs() < 1e-12, "bp {}", comp.bp);
    Ok(format!("{score} (bp {:.6})", comp.bp))
}

fn distribution() -> Check {
    let mut preds = vec![Some(AnswerLabel::Yes); 78];
    preds.extend(vec![Some(AnswerLabel::No); 14]);
    preds.extend(vec![Some(AnswerLabel::Maybe); 22]);
    let table = response_distribution(&preds, &AnswerLabel::BOOLEANS).map_err(err)?;
    ensure!(table.n == 114, "n = {}", table.n);
    ensure!(table.summary() == "68.42 / 12.28 / 19.30", "rendered {}", table.summary());
    Ok(table.summary())
}

/// Collects formatted tracing output.
#[derive(Clone, Default)]
struct Captured(Arc<Mutex<Vec<u8>>>);

impl std::io::Write for Captured {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

fn hyperparameter_plan() -> Check {
    let big = plan_hyperparameters(196_144, None).map_err(err)?;
    ensure!((big.batch_size, big.epochs) == (64, 1), "196,144 → batch {} epochs {}", big.batch_size, big.epochs);
    let small = plan_hyperparameters(551, None).map_err(err)?;
    ensure!((small.batch_size, small.epochs) == (1, 3), "551 → batch {} epochs {}", small.batch_size, small.epochs);
    ensure!(big.warnings.is_empty() && small.warnings.is_empty(), "unexpected warnings");

    let sink = Captured::default();
    let writer = sink.clone();
    let subscriber = tracing_subscriber::fmt()
        .with_writer(move || writer.clone())
        .with_ansi(false)
        .with_max_level(tracing::Level::WARN)
        .finish();
    let medqa = tracing::subscriber::with_default(subscriber, || plan_hyperparameters(10_178, None)).map_err(err)?;
    let log = String::from_utf8_lossy(&sink.0.lock()).into_owned();
    ensure!(medqa.batch_size == 20, "10,178 → batch {}", medqa.batch_size);
    ensure!(
        medqa.warnings.iter().any(|w| w.contains("20") && w.contains("13")),
        "no discrepancy recorded: {:?}",
        medqa.warnings
    );
    ensure!(log.contains("WARN") && log.contains("13"), "no warning logged: {log:?}");
    Ok("64/1, 1/3, 10,178 warns (20 vs 13)".into())
}

fn profile_constants() -> Check {
    type Row = (ProfileMode, &'static str, u32, f64, f64, f64, f64, &'static [&'static str]);
    let table: [Row; 3] = [
        (
            ProfileMode::Closed,
            "You are an expert medical AI assistant. Answer the following question using only one letter: A, B, C, or D.",
            2,
            0.1,
            0.7,
            0.5,
            0.1,
            &["\n"],
        ),
        (
            ProfileMode::LongForm,
            "You are a biomedical research expert. Generate precise and well-structured answers.",
            300,
            0.2,
            0.8,
            0.0,
            0.0,
            &[],
        ),
        (
            ProfileMode::ShortForm,
            "You are an expert medical AI assistant. Provide concise and accurate answers.",
            50,
            0.2,
            0.85,
            0.2,
            0.0,
            &[],
        ),
    ];
    for (mode, msg, max_tokens, temperature, top_p, fp, pp, stop) in table {
        let p = profile_for(mode);
        ensure!(p.mode == mode, "{mode}: mode field {}", p.mode);
        ensure!(p.system_message == msg, "{mode}: system message {:?}", p.system_message);
        let d = &p.params;
        ensure!(d.max_tokens == max_tokens, "{mode}: max_tokens {}", d.max_tokens);
        ensure!(d.temperature == temperature, "{mode}: temperature {}", d.temperature);
        ensure!(d.top_p == top_p, "{mode}: top_p {}", d.top_p);
        ensure!(d.frequency_penalty == fp, "{mode}: frequency_penalty {}", d.frequency_penalty);
        ensure!(d.presence_penalty == pp, "{mode}: presence_penalty {}", d.presence_penalty);
        ensure!(d.stop == stop, "{mode}: stop {:?}", d.stop);
    }
    Ok("3 profiles, 7 fields each".into())
}

const INDEX_WORDS: [&str; 16] = [
    "aspirin", "platelet", "renal", "cardiac", "dose", "therapy", "the", "of", "patients", "chronic", "acute",
    "infection", "insulin", "trial", "with", "risk",
];

/// Letters that the stemmer leaves alone in an all-consonant word.
const MARKER_LETTERS: &[u8] = b"bcdfghjklmnpqrtvwxz";

fn marker(i: usize) -> String {
    let n = MARKER_LETTERS.len();
    let mut s = String::from("zq");
    let mut v = i;
    for _ in 0..3 {
        s.push(MARKER_LETTERS[v % n] as char);
        v /= n;
    }
    s
}

fn random_corpus(rng: &mut ChaCha8Rng) -> Vec<KnowledgeChunk> {
    let n = rng.random_range(1..=50);
    (0..n)
        .map(|i| {
            let len = rng.random_range(0..12);
            let mut words: Vec<String> = (0..len).map(|_| INDEX_WORDS[rng.random_range(0..INDEX_WORDS.len())].to_string()).collect();
            words.insert(rng.random_range(0..=words.len()), marker(i));
            KnowledgeChunk::from_text(format!("c{i:03}"), format!("r{i:03}"), ChunkField::Answer, &words.join(" "))
        })
        .collect()
}

fn index_properties() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1dec5);
    let corpora = 120;
    for round in 0..corpora {
        let chunks = random_corpus(&mut rng);
        let n = chunks.len();

        let index = build_index(chunks.clone()).map_err(err)?;
        let mut shuffled = chunks.clone();
        shuffled.shuffle(&mut rng);
        let again = build_index(shuffled).map_err(err)?;
        ensure!(index == again, "round {round}: build depends on input order");

        for (i, chunk) in chunks.iter().enumerate() {
            let hits = index.search(&marker(i), 1).map_err(err)?;
            ensure!(
                hits.first().map(|h| h.chunk_id.as_str()) == Some(chunk.chunk_id.as_str()),
                "round {round}: {} not at rank 1 for its marker",
                chunk.chunk_id
            );
        }

        let query: Vec<&str> = (0..rng.random_range(1..4)).map(|_| INDEX_WORDS[rng.random_range(0..INDEX_WORDS.len())]).collect();
        let query = query.join(" ");
        match index.search(&query, n) {
            Ok(full) => {
                ensure!(full == again.search(&query, n).map_err(err)?, "round {round}: searches differ");
                for k in 1..n {
                    let shorter = index.search(&query, k).map_err(err)?;
                    let longer = index.search(&query, k + 1).map_err(err)?;
                    ensure!(longer.starts_with(&shorter), "round {round}: hits({k}) not a prefix of hits({})", k + 1);
                }
            }
            Err(bioqa_core::index::IndexError::EmptyQuery) => {}
            Err(e) => return Err(format!("round {round}: {e}")),
        }

        let split = rng.random_range(0..=n);
        let (base, added) = chunks.split_at(split);
        let removed: Vec<String> = base.iter().filter(|_| rng.random_bool(0.3)).map(|c| c.chunk_id.clone()).collect();
        let refreshed = build_index(base.to_vec()).map_err(err)?.refresh(added.to_vec(), &removed).map_err(err)?;
        let expected: Vec<KnowledgeChunk> = chunks.iter().filter(|c| !removed.contains(&c.chunk_id)).cloned().collect();
        ensure!(refreshed == build_index(expected).map_err(err)?, "round {round}: refresh differs from rebuild");
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("{corpora} corpora, {elapsed:.2?}"))
}

async fn end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let mut config = RunConfig::load(&fixture("closed20.toml")).map_err(err)?;
    let mut bytes = Vec::new();
    let mut reports = Vec::new();
    let path = dir.path().join("report.json");
    config.output.path = Some(path.clone());
    for _ in 0..2 {
        reports.push(run_eval(&config).await.map_err(err)?);
        bytes.push(std::fs::read(&path).map_err(err)?);
        std::fs::remove_file(&path).map_err(err)?;
    }
    ensure!(bytes[0] == bytes[1], "reports differ between runs");

    // hand-labeled from the script: four wrong letters and one refusal
    let wrong = ["mq04", "mq09", "mq14", "mq19", "mq20"];
    let report = &reports[0];
    for record in &report.records {
        let expected = if wrong.contains(&record.id.as_str()) { 0.0 } else { 1.0 };
        ensure!(record.scores[CORRECT] == expected, "{} scored {}", record.id, record.scores[CORRECT]);
    }
    let scripted = 100.0 * (20 - wrong.len()) as f64 / 20.0;
    ensure!(report.aggregates[ACCURACY] == scripted, "accuracy {} vs scripted {scripted}", report.aggregates[ACCURACY]);
    Ok(format!("{} bytes identical, accuracy {}", bytes[0].len(), report.aggregates[ACCURACY]))
}

/// Answers with the retrieved context it was given, so output depends on k.
struct ContextEcho;

#[async_trait]
impl Backend for ContextEcho {
    fn id(&self) -> &str {
        "context-echo"
    }

    async fn send(&self, request: &ChatRequest) -> Result<ModelResponse, LlmError> {
        let user = request.messages.iter().find(|m| m.role == Role::User).map(|m| m.content.as_str()).unwrap_or("");
        let context: Vec<&str> = user
            .lines()
            .filter(|l| l.starts_with('['))
            .filter_map(|l| l.split_once("] ").map(|(_, t)| t))
            .collect();
        Ok(ModelResponse {
            raw_text: Some(if context.is_empty() { "unknown".into() } else { context.join(" ") }),
            finish_reason: FinishReason::Stop,
            latency: Duration::ZERO,
            backend_id: self.id().into(),
        })
    }
}

fn sweep_config(dir: &Path) -> Result<RunConfig, String> {
    let file = std::fs::File::open(fixture("knowledge.jsonl")).map_err(err)?;
    let knowledge = parse_dataset(Dataset::Medqa, std::io::BufReader::new(file)).map_err(err)?;
    let index = index_records(&knowledge, ChunkPolicy::default()).map_err(err)?;
    save_index_file(&index, &dir.join("knowledge.index")).map_err(err)?;
    let text = format!(
        "label = \"echo\"\n\n[dataset]\npath = {:?}\nformat = \"medqa\"\n\n[backend]\nkind = \"mock\"\nscript = {:?}\n\n\
         [rag]\nindex = \"knowledge.index\"\nk = 1\n",
        fixture("shortform.jsonl").display().to_string(),
        fixture("closed20.script.jsonl").display().to_string(),
    );
    RunConfig::from_toml(&text, dir).map_err(err)
}

async fn sweep_plumbing() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let config = sweep_config(dir.path())?;
    let backend: Arc<dyn Backend> = Arc::new(ContextEcho);
    let ks = [1, 2, 3, 4, 5];
    let outcome = sweep_topk_with(&config, &ks, Arc::clone(&backend)).await.map_err(err)?;
    ensure!(outcome.summary.rows.len() == 5, "{} rows", outcome.summary.rows.len());
    let mut distinct = Vec::new();
    for (row, &k) in outcome.summary.rows.iter().zip(&ks) {
        ensure!(row.k == k, "row k {} expected {k}", row.k);
        let single = run_eval_with(&config.with_k(k).map_err(err)?, Arc::clone(&backend)).await.map_err(err)?;
        for (metric, value) in &row.values {
            let want = single.aggregates.get(metric).copied();
            ensure!(want == Some(*value), "k={k} {metric}: sweep {value} vs single {want:?}");
        }
        ensure!(row.values.len() == single.aggregates.len(), "k={k}: column sets differ");
        distinct.push(row.values["rougeL"]);
    }
    distinct.dedup();
    ensure!(distinct.len() > 1, "scores do not vary with k");
    Ok(format!("5 rows, rougeL by k {:?}", outcome.summary.rows.iter().map(|r| format!("{:.2}", r.values["rougeL"])).collect::<Vec<_>>()))
}

fn extraction() -> Check {
    let text = std::fs::read_to_string(fixture("extraction30.jsonl")).map_err(err)?;
    let mut n = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let case: serde_json::Value = serde_json::from_str(line).map_err(err)?;
        let mode: QaMode = case["mode"].as_str().unwrap_or_default().parse().map_err(err)?;
        let raw = case["raw"].as_str().unwrap_or_default();
        let got = extract_answer(mode, raw).to_string();
        ensure!(got == case["expected"].as_str().unwrap_or_default(), "{} {raw:?} → {got:?}, expected {}", mode.as_str(), case["expected"]);
        n += 1;
    }
    ensure!(n == 30, "{n} cases");

    let mut rng = ChaCha8Rng::seed_from_u64(0xf22);
    let alphabet: Vec<char> = "aAbBcCdDeE xyz.,:;()!?\n\t0123456789éßяあ—".chars().collect();
    for _ in 0..20_000 {
        let len = rng.random_range(0..24);
        let raw: String = (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
        match extract_answer(QaMode::ClosedChoice, &raw) {
            ExtractedAnswer::Label(l) if l.is_letter() => {}
            ExtractedAnswer::Unparseable => {}
            other => return Err(format!("{raw:?} → {other:?}")),
        }
    }
    Ok("30/30 cases, 20000 fuzz inputs".into())
}

const PLANTED: [(Criterion, [usize; 3]); 5] = [
    (Criterion::Accuracy, [20, 12, 8]),
    (Criterion::Coverage, [16, 16, 8]),
    (Criterion::Succinctness, [10, 20, 10]),
    (Criterion::Coherence, [14, 6, 20]),
    (Criterion::OverallQuality, [22, 10, 8]),
];

async fn pairwise_tally() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let mut data = String::new();
    let mut script1 = String::new();
    let mut script2 = String::new();
    for i in 1..=40 {
        let id = format!("lf{i:02}");
        data += &serde_json::json!({"id": id, "question": format!("How is condition {i} managed?"), "answer_text": "Supportive care."}).to_string();
        data.push('\n');
        script1 += &serde_json::json!({"key": id, "response": format!("Rest, fluids and review in {i} days.")}).to_string();
        script1.push('\n');
        script2 += &serde_json::json!({"key": id, "response": format!("Start treatment {i} and monitor closely.")}).to_string();
        script2.push('\n');
    }
    std::fs::write(dir.path().join("data.jsonl"), data).map_err(err)?;
    std::fs::write(dir.path().join("one.jsonl"), script1).map_err(err)?;
    std::fs::write(dir.path().join("two.jsonl"), script2).map_err(err)?;
    let config = |label: &str, script: &str| {
        RunConfig::from_toml(
            &format!("label = \"{label}\"\n[dataset]\npath = \"data.jsonl\"\nformat = \"liveqa\"\n[backend]\nkind = \"mock\"\nscript = \"{script}\"\nmodel = \"{label}-model\"\n"),
            dir.path(),
        )
    };
    let run1 = run_eval(&config("system-north", "one.jsonl").map_err(err)?).await.map_err(err)?;
    let run2 = run_eval(&config("system-south", "two.jsonl").map_err(err)?).await.map_err(err)?;
    let tasks = sample_pairs(&run1, &run2, 40, 7).map_err(err)?;
    ensure!(tasks.len() == 40, "{} tasks", tasks.len());

    let identifiers = [
        "system-north",
        "system-south",
        "north-model",
        "south-model",
        run1.fingerprint.as_str(),
        run2.fingerprint.as_str(),
        "run1",
        "run2",
        "record_id",
    ];
    let store = PairwiseStore::in_memory(tasks.clone()).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut outcomes: BTreeMap<Criterion, Vec<usize>> = BTreeMap::new();
    for (criterion, counts) in PLANTED {
        let mut v: Vec<usize> = counts.iter().enumerate().flat_map(|(o, &c)| std::iter::repeat_n(o, c)).collect();
        v.shuffle(&mut rng);
        outcomes.insert(criterion, v);
    }
    for (t, task) in tasks.iter().enumerate() {
        let payload = serde_json::to_string(&store.next_task("clinician")).map_err(err)?
            + &serde_json::to_string(&store.blind_task(&task.task_id)).map_err(err)?;
        if let Some(leak) = identifiers.iter().find(|id| payload.contains(*id)) {
            return Err(format!("rater payload for {} contains `{leak}`", task.task_id));
        }
        let choices = outcomes
            .iter()
            .map(|(&c, v)| {
                let choice = match (v[t], task.run1_side) {
                    (0, Side::A) | (1, Side::B) => Choice::A,
                    (0, Side::B) | (1, Side::A) => Choice::B,
                    _ => Choice::Tie,
                };
                (c, choice)
            })
            .collect();
        let rating = Rating { task_id: task.task_id.clone(), rater_id: "clinician".into(), choices, timestamp: None };
        store.record_rating(rating).map_err(err)?;
    }

    let summary = store.tally().map_err(err)?;
    for (criterion, [m1, m2, tie]) in PLANTED {
        let share = summary.criteria.get(&criterion).ok_or_else(|| format!("{criterion} missing"))?;
        let want = |c: usize| c as f64 * 100.0 / 40.0;
        ensure!(
            (share.model1, share.model2, share.tie) == (want(m1), want(m2), want(tie)),
            "{criterion}: got {}/{}/{}",
            share.model1,
            share.model2,
            share.tie
        );
    }
    let sides_a = tasks.iter().filter(|t| t.run1_side == Side::A).count();
    Ok(format!("40 tasks exact, run 1 on side A in {sides_a}/40, payloads blind"))
}

fn main() {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().expect("runtime");
    let results: Vec<(&str, Check)> = vec![
        ("metric oracle equivalence", metric_oracle()),
        ("bleu worked example", bleu_worked_example()),
        ("distribution reconstruction", distribution()),
        ("hyperparameter plan", hyperparameter_plan()),
        ("profile constants", profile_constants()),
        ("index properties", index_properties()),
        ("end-to-end reproducibility", runtime.block_on(end_to_end())),
        ("top-k sweep plumbing", runtime.block_on(sweep_plumbing())),
        ("answer extraction", extraction()),
        ("pairwise tally", runtime.block_on(pairwise_tally())),
    ];
    let mut out = std::io::stdout().lock();
    let mut failed = 0;
    for (name, result) in &results {
        let _ = match result {
            Ok(detail) => writeln!(out, "PASS {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                writeln!(out, "FAIL {name}: {reason}")
            }
        };
    }
    let _ = writeln!(out, "{} passed, {failed} failed", results.len() - failed);
    drop(out);
    if failed > 0 {
        std::process::exit(1);
    }
}
