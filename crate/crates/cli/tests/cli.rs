use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::Duration;

use bioqa_client::BioqaClient;
use bioqa_core::pairwise::{Choice, Criterion, Rating};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

/// A scratch directory holding a copy of every fixture file.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(fixtures()).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
    }
    dir
}

fn bioqa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bioqa"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = bioqa(dir, args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn corpus_commands() {
    let dir = workspace();
    let d = dir.path();
    let out = ok(d, &["corpus", "parse", "--format", "medqa", "--input", "closed20.jsonl", "--out", "norm.jsonl"]);
    assert!(out.contains("20 records"), "{out}");
    assert!(out.contains("closed_choice: 20"), "{out}");
    assert_eq!(lines(&d.join("norm.jsonl")), 20);

    ok(d, &["corpus", "split", "--format", "medqa", "--input", "closed20.jsonl", "--seed", "3", "--train-out", "tr.jsonl", "--test-out", "te.jsonl"]);
    assert_eq!((lines(&d.join("tr.jsonl")), lines(&d.join("te.jsonl"))), (16, 4));

    let out = ok(d, &["corpus", "export-ft", "--format", "medqa", "--input", "closed20.jsonl", "--out", "ft/train.jsonl"]);
    assert!(out.contains("wrote 20 examples"), "{out}");
    let first: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(d.join("ft/train.jsonl")).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["messages"][2]["role"], "assistant");

    let plan: serde_json::Value = serde_json::from_str(&ok(d, &["corpus", "plan", "--n-train", "551"])).unwrap();
    assert_eq!((plan["batch_size"].as_u64(), plan["epochs"].as_u64()), (Some(1), Some(3)));
    let out = bioqa(d, &["corpus", "plan", "--n-train", "10178"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("13"));

    let out = bioqa(d, &["corpus", "parse", "--format", "medqa", "--input", "missing.jsonl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.jsonl"));
}

#[test]
fn index_and_metrics_commands() {
    let dir = workspace();
    let d = dir.path();
    let out = ok(d, &["index", "build", "--format", "medqa", "--input", "knowledge.jsonl", "--out", "knowledge.index"]);
    assert!(out.contains("from 15 records"), "{out}");
    let out = ok(d, &["index", "search", "--index", "knowledge.index", "--query", "heparin reversal", "--k", "2"]);
    let top = out.lines().next().unwrap();
    assert!(top.starts_with("1\t") && top.contains("kb04"), "{out}");

    std::fs::write(d.join("cand.txt"), "the cat sat on\n").unwrap();
    std::fs::write(d.join("ref.txt"), "the cat sat on the mat\n").unwrap();
    let out = ok(d, &["metrics", "score", "--metric", "bleu", "--cand", "cand.txt", "--ref", "ref.txt"]);
    assert!(out.starts_with("bleu 60.65\n"), "{out}");
    assert!(out.contains("bp = 0.6065"), "{out}");
    let out = ok(d, &["metrics", "score", "--metric", "rouge1", "--cand", "cand.txt", "--ref", "ref.txt", "--variant", "f1"]);
    assert_eq!(out, "rouge1 80.00\n");
}

#[test]
fn run_sweep_and_report() {
    let dir = workspace();
    let d = dir.path();
    let toml = std::fs::read_to_string(d.join("closed20.toml")).unwrap() + "\n[output]\npath = \"out/closed.json\"\n";
    std::fs::write(d.join("closed20.toml"), toml).unwrap();
    let out = ok(d, &["run", "--config", "closed20.toml"]);
    assert!(out.contains("scripted-closed") && out.contains("75.00"), "{out}");
    let first = std::fs::read(d.join("out/closed.json")).unwrap();
    ok(d, &["run", "--config", "closed20.toml"]);
    assert_eq!(first, std::fs::read(d.join("out/closed.json")).unwrap());

    ok(d, &["index", "build", "--format", "medqa", "--input", "knowledge.jsonl", "--out", "knowledge.index"]);
    let out = ok(d, &["sweep", "--config", "shortform.toml", "--ks", "1,2,3"]);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows.len(), 4, "{out}");
    assert!(rows[0].starts_with("k,"), "{out}");
    for k in 1..=3 {
        assert!(d.join(format!("out/shortform-k{k}.json")).exists());
    }
    assert!(d.join("out/shortform-sweep.csv").exists());

    let out = ok(d, &["report", "--in", "out/shortform-k*.json", "--format", "csv"]);
    assert_eq!(out.lines().count(), 4, "{out}");
    assert!(out.starts_with("model,"), "{out}");

    // closed and short-form reports cannot share a table
    let out = bioqa(d, &["report", "--in", "out/*.json"]);
    assert!(!out.status.success());
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn spawn(dir: &Path, args: &[&str]) -> Server {
    let child = Command::new(env!("CARGO_BIN_EXE_bioqa"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    Server(child)
}

async fn wait_ready(client: &BioqaClient) {
    for _ in 0..100 {
        if client.health().await.is_ok() {
            return;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("service did not come up");
}

fn rating(task: &str, choice: Choice) -> Rating {
    Rating {
        task_id: task.into(),
        rater_id: "dr-a".into(),
        choices: Criterion::ALL.iter().map(|&c| (c, choice)).collect::<BTreeMap<_, _>>(),
        timestamp: None,
    }
}

#[tokio::test]
async fn pairwise_session_over_http() {
    let dir = workspace();
    let d = dir.path();
    let base = std::fs::read_to_string(d.join("closed20.toml")).unwrap();
    std::fs::write(d.join("one.toml"), base.clone() + "\n[output]\npath = \"one.json\"\n").unwrap();
    let all_a: String = (1..=20).map(|i| format!("{{\"key\":\"mq{i:02}\",\"response\":\"A\"}}\n")).collect();
    std::fs::write(d.join("all_a.jsonl"), all_a).unwrap();
    let two = base.replace("closed20.script.jsonl", "all_a.jsonl").replace("scripted-closed", "always-a");
    std::fs::write(d.join("two.toml"), two + "\n[output]\npath = \"two.json\"\n").unwrap();
    ok(d, &["run", "--config", "one.toml"]);
    ok(d, &["run", "--config", "two.toml"]);

    let port = free_port().to_string();
    let url = format!("http://127.0.0.1:{port}");
    let server = spawn(
        d,
        &["pairwise", "serve", "--run1", "one.json", "--run2", "two.json", "--n", "5", "--seed", "7", "--dir", "session", "--port", &port],
    );
    let client = BioqaClient::new(&url);
    wait_ready(&client).await;
    assert_eq!(client.health().await.unwrap().tasks, Some(5));

    let mut rated = 0;
    while let Some(task) = client.next_task("dr-a").await.unwrap().task {
        let choice = if rated % 2 == 0 { Choice::A } else { Choice::Tie };
        client.submit_rating(&rating(&task.task_id, choice)).await.unwrap();
        rated += 1;
    }
    assert_eq!(rated, 5);

    let out = ok(d, &["pairwise", "summary", "--server", &url]);
    assert!(out.starts_with("5 tasks, 5 ratings"), "{out}");
    drop(server);

    // ratings are durable once acknowledged
    let out = ok(d, &["pairwise", "summary", "--dir", "session"]);
    assert!(out.contains("overall_quality"), "{out}");
    let tie_column: Vec<&str> = out.lines().skip(2).map(|l| l.split_whitespace().last().unwrap()).collect();
    assert!(tie_column.iter().all(|t| *t == "40.00"), "{out}");
    ok(d, &["pairwise", "export", "--dir", "session", "--out", "ratings.jsonl"]);
    assert_eq!(lines(&d.join("ratings.jsonl")), 5);

    // resuming keeps the task set and the ratings
    let port = free_port().to_string();
    let url = format!("http://127.0.0.1:{port}");
    let _server = spawn(d, &["pairwise", "serve", "--dir", "session", "--port", &port]);
    let client = BioqaClient::new(&url);
    wait_ready(&client).await;
    assert_eq!(client.export().await.unwrap().len(), 5);
    assert!(client.next_task("dr-a").await.unwrap().task.is_none());
}

#[tokio::test]
async fn general_service_routes_cli_work() {
    let dir = workspace();
    let d = dir.path();
    ok(d, &["index", "build", "--format", "medqa", "--input", "knowledge.jsonl", "--out", "knowledge.index"]);
    let port = free_port().to_string();
    let url = format!("http://127.0.0.1:{port}");
    let _server = spawn(d, &["serve", "--port", &port, "--index", "knowledge.index"]);
    let client = BioqaClient::new(&url);
    wait_ready(&client).await;
    assert_eq!(client.search("naloxone opioid", 1).await.unwrap()[0].chunk_id, "kb10:a:0");

    std::fs::write(d.join("cand.txt"), "the cat sat on\n").unwrap();
    std::fs::write(d.join("ref.txt"), "the cat sat on the mat\n").unwrap();
    let out = ok(d, &["metrics", "score", "--metric", "bleu", "--cand", "cand.txt", "--ref", "ref.txt", "--server", &url]);
    assert!(out.starts_with("bleu 60.65"), "{out}");

    let toml = std::fs::read_to_string(d.join("closed20.toml")).unwrap() + "\n[output]\npath = \"remote/closed.json\"\n";
    std::fs::write(d.join("closed20.toml"), toml).unwrap();
    let out = ok(d, &["run", "--config", "closed20.toml", "--server", &url]);
    assert!(out.contains("75.00"), "{out}");
    assert!(d.join("remote/closed.json").exists());
}
