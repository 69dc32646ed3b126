use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn latte(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latte"))
        .args(args)
        .output()
        .expect("failed to spawn latte")
}

fn ok_json(args: &[&str]) -> Value {
    let out = latte(args);
    assert!(
        out.status.success(),
        "latte {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is not JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path) {
    ok_json(&[
        "synth",
        "--out",
        p(dir),
        "--docs",
        "120",
        "--queries",
        "12",
        "--dim",
        "16",
        "--seed",
        "3",
    ]);
}

#[test]
fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let c = tmp.path().join("c");
    synth(&c);
    let docs = c.join("docs.bin");
    let queries = c.join("queries.bin");
    let vocab = c.join("vocab.tsv");
    let qrels = c.join("qrels.tsv");

    let idf = tmp.path().join("idf.tsv");
    ok_json(&[
        "idf",
        "--docs",
        p(&docs),
        "--vocab",
        p(&vocab),
        "--out",
        p(&idf),
    ]);

    let pruned = tmp.path().join("pruned.bin");
    let report = ok_json(&[
        "prune",
        "--docs",
        p(&docs),
        "--vocab",
        p(&vocab),
        "--method",
        "idf-top",
        "--alpha",
        "0.5",
        "--idf",
        p(&idf),
        "--out",
        p(&pruned),
    ]);
    assert!(report["tokens_after"].as_u64() < report["tokens_before"].as_u64());

    let soft = tmp.path().join("soft");
    ok_json(&[
        "index-soft",
        "--docs",
        p(&pruned),
        "--out",
        p(&soft),
        "--seed",
        "1",
    ]);
    let hard = tmp.path().join("hard");
    ok_json(&["index-hard", "--docs", p(&docs), "--out", p(&hard)]);

    let full_run = tmp.path().join("full.run");
    let full = ok_json(&[
        "retrieve",
        "--index",
        p(&soft),
        "--queries",
        p(&queries),
        "--k",
        "50",
        "--k-prime",
        "16",
        "--out",
        p(&full_run),
    ]);
    let qtp_run = tmp.path().join("qtp.run");
    let stats = tmp.path().join("stats.jsonl");
    let qtp = ok_json(&[
        "retrieve",
        "--index",
        p(&soft),
        "--queries",
        p(&queries),
        "--k",
        "50",
        "--k-prime",
        "16",
        "--qtp",
        "idf",
        "--idf-keep",
        "2",
        "--idf",
        p(&idf),
        "--vocab",
        p(&vocab),
        "--out",
        p(&qtp_run),
        "--stats",
        p(&stats),
    ]);
    assert!(qtp["ard"].as_f64() <= full["ard"].as_f64());
    let stat_lines = std::fs::read_to_string(&stats).unwrap();
    assert_eq!(stat_lines.lines().count(), 12);

    let hard_run = tmp.path().join("hard.run");
    ok_json(&[
        "retrieve",
        "--index",
        p(&hard),
        "--queries",
        p(&queries),
        "--k",
        "50",
        "--out",
        p(&hard_run),
    ]);

    for run in [&full_run, &qtp_run, &hard_run] {
        let m = ok_json(&["evaluate", "--run", p(run), "--qrels", p(&qrels)]);
        for key in ["mrr@10", "recall@100", "ndcg@10"] {
            let v = m[key]["mean"].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&v), "{key} = {v}");
        }
    }

    let t = ok_json(&[
        "tost",
        "--run-a",
        p(&full_run),
        "--run-b",
        p(&full_run),
        "--qrels",
        p(&qrels),
    ]);
    assert_eq!(t["equivalent"], Value::Bool(true));
    assert_eq!(t["zero_variance"], Value::Bool(true));

    let out = tmp.path().join("bins.tsv");
    let plot = tmp.path().join("bins.svg");
    let a = ok_json(&[
        "analyze",
        "--pairs",
        p(&qrels),
        "--queries",
        p(&queries),
        "--docs",
        p(&docs),
        "--vocab",
        p(&vocab),
        "--scheme",
        "idf",
        "--kind",
        "hard",
        "--out",
        p(&out),
        "--plot",
        p(&plot),
    ]);
    assert_eq!(a["pairs"], 12);
    let tsv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(tsv.lines().count(), 10);
    assert!(tsv.lines().all(|l| l.split('\t').count() == 3));
    assert!(std::fs::read_to_string(&plot).unwrap().starts_with("<svg"));

    let b = ok_json(&[
        "bench",
        "--index",
        p(&hard),
        "--queries",
        p(&queries),
        "--kind",
        "hard-token",
        "--repetitions",
        "1",
    ]);
    assert_eq!(b["queries"], 12);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let c = tmp.path().join("c");
    synth(&c);
    let hard = tmp.path().join("hard");
    ok_json(&[
        "index-hard",
        "--docs",
        p(&c.join("docs.bin")),
        "--out",
        p(&hard),
    ]);

    let conf = tmp.path().join("retrieve.conf");
    let run = tmp.path().join("r.run");
    std::fs::write(
        &conf,
        format!(
            "# retrieval defaults\nindex = {}\nqueries = {}\nout = {}\nk = 3\n",
            p(&hard),
            p(&c.join("queries.bin")),
            p(&run)
        ),
    )
    .unwrap();

    ok_json(&["retrieve", "--config", p(&conf)]);
    let text = std::fs::read_to_string(&run).unwrap();
    assert!(text
        .lines()
        .all(|l| l.split(' ').nth(3).unwrap().parse::<usize>().unwrap() <= 3));

    ok_json(&["retrieve", "--config", p(&conf), "--k", "5"]);
    let text = std::fs::read_to_string(&run).unwrap();
    assert!(text.lines().any(|l| l.split(' ').nth(3) == Some("5")));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.bin");
    let out = latte(&["index-hard", "--docs", p(&missing), "--out", p(tmp.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.bin"));

    let garbage = tmp.path().join("garbage.bin");
    std::fs::write(&garbage, b"not an embedding file").unwrap();
    let out = latte(&[
        "index-soft",
        "--docs",
        p(&garbage),
        "--out",
        p(&tmp.path().join("s")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("format error"));

    let out = latte(&[
        "retrieve",
        "--index",
        p(tmp.path()),
        "--queries",
        p(&garbage),
        "--out",
        "x",
    ]);
    assert!(!out.status.success());
}
