use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_spix");

fn spix(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn spix")
}

fn ok(args: &[&str]) -> Output {
    let out = spix(args);
    assert!(
        out.status.success(),
        "spix {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn gen(dir: &Path, seed: &str) {
    ok(&[
        "gen", "--docs", "400", "--vocab", "200", "--doc-len", "20", "--queries", "15", "--seed", seed,
        "--out-dir", &p(dir, ""),
    ]);
}

#[test]
fn pipeline_smoke() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    gen(d, "3");
    let (vectors, queries, qrels) = (p(d, "vectors.jsonl"), p(d, "queries.jsonl"), p(d, "qrels.txt"));
    ok(&["build", "--input", &vectors, "--output", &p(d, "base.spix")]);
    ok(&["prune", "--input", &vectors, "--method", "doc-topk", "--param", "4", "--output", &p(d, "d4.spix")]);
    ok(&["prune", "--input", &vectors, "--method", "doc-topk", "--param", "4", "--output", &p(d, "d4.jsonl")]);
    ok(&["prune", "--input", &vectors, "--method", "term-quantile", "--param", "0.5", "--output", &p(d, "t.spix")]);
    assert!(fs::metadata(p(d, "d4.spix")).unwrap().len() < fs::metadata(p(d, "base.spix")).unwrap().len());

    for (index, run) in [("base.spix", "base.run"), ("d4.spix", "d4.run"), ("t.spix", "t.run")] {
        ok(&["search", "--index", &p(d, index), "--queries", &queries, "--k", "100", "--output", &p(d, run)]);
    }
    ok(&["search", "--index", &p(d, "base.spix"), "--queries", &queries, "--k", "100", "--algorithm", "daat",
        "--output", &p(d, "daat.run")]);
    assert_eq!(fs::read(p(d, "base.run")).unwrap(), fs::read(p(d, "daat.run")).unwrap());

    let eval = ok(&["evaluate", "--run", &p(d, "d4.run"), "--qrels", &qrels, "--compare", &p(d, "base.run")]);
    let csv = String::from_utf8(eval.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "metric,cutoff,mean,n_queries,base_mean,t_statistic,p_value,significant"
    );
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 8);
        let pv: f64 = cols[6].parse().unwrap();
        assert!((0.0..=1.0).contains(&pv));
    }

    let bench = ok(&["bench", "--index", &p(d, "base.spix"), "--queries", &queries, "--k", "10", "--repeats", "2"]);
    assert!(String::from_utf8(bench.stdout).unwrap().starts_with("queries,samples,warmup,repeats,mean_ms\n15,30,1,2,"));

    fs::write(p(d, "cfg.json"), r#"[{"method":"none"},{"method":"doc-topk","param":4}]"#).unwrap();
    ok(&["sweep", "--input", &vectors, "--configs", &p(d, "cfg.json"), "--queries", &queries, "--qrels", &qrels,
        "--out", &p(d, "sweep.csv"), "--k", "50", "--repeats", "1"]);
    let sweep = fs::read_to_string(p(d, "sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);
    assert!(sweep.lines().nth(1).unwrap().starts_with("baseline,"));

    ok(&["stats", "--input", &vectors, "--out", &p(d, "stats.csv")]);
    assert_eq!(fs::read_to_string(p(d, "stats.csv")).unwrap().lines().count(), 201);
}

#[test]
fn identical_inputs_give_identical_outputs() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen(&a, "11");
    gen(&b, "11");
    for dir in [&a, &b] {
        ok(&["build", "--input", &p(dir, "vectors.jsonl"), "--output", &p(dir, "i.spix")]);
        ok(&["prune", "--input", &p(dir, "vectors.jsonl"), "--method", "global-threshold", "--param", "0.5",
            "--shift", "--output", &p(dir, "a.spix")]);
        ok(&["stats", "--input", &p(dir, "vectors.jsonl"), "--out", &p(dir, "s.csv")]);
    }
    for (i, threads) in ["1", "4"].iter().enumerate() {
        for dir in [&a, &b] {
            ok(&["--threads", threads, "search", "--index", &p(dir, "i.spix"), "--queries",
                &p(dir, "queries.jsonl"), "--output", &p(dir, &format!("r{i}.run"))]);
        }
    }
    for f in ["vectors.jsonl", "queries.jsonl", "qrels.txt", "i.spix", "a.spix", "s.csv", "r0.run", "r1.run"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(fs::read(a.join("r0.run")).unwrap(), fs::read(a.join("r1.run")).unwrap());
}

#[test]
fn help_lists_every_flag() {
    let expected: &[(&str, &[&str])] = &[
        ("build", &["--input", "--output", "--quant-bits", "--query-scale"]),
        ("prune", &["--input", "--method", "--param", "--shift", "--expanded", "--output"]),
        ("search", &["--index", "--queries", "--k", "--algorithm", "--output", "--tag"]),
        ("evaluate", &["--run", "--qrels", "--metrics", "--compare", "--alpha", "--corrections", "--gain", "--output"]),
        ("bench", &["--index", "--queries", "--k", "--algorithm", "--warmup", "--repeats"]),
        ("sweep", &["--input", "--configs", "--queries", "--qrels", "--out", "--k", "--expanded"]),
        ("stats", &["--input", "--tau", "--k-target", "--p-target", "--activation", "--mse", "--out"]),
        ("gen", &["--docs", "--vocab", "--doc-len", "--queries", "--seed", "--out-dir", "--zipf"]),
    ];
    for (cmd, flags) in expected {
        let out = spix(&[cmd, "--help"]);
        assert_eq!(out.status.code(), Some(0));
        let text = String::from_utf8(out.stdout).unwrap();
        for flag in *flags {
            assert!(text.contains(flag), "{cmd} --help lacks {flag}");
        }
        assert!(text.contains("--threads"), "{cmd} --help lacks --threads");
    }
}

#[test]
fn exit_codes() {
    assert_eq!(spix(&["build", "--bogus"]).status.code(), Some(1));
    assert_eq!(spix(&[]).status.code(), Some(1));
    assert_eq!(spix(&["--version"]).status.code(), Some(0));

    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(
        spix(&["build", "--input", &p(d, "missing.jsonl"), "--output", &p(d, "x.spix")]).status.code(),
        Some(2)
    );
    fs::write(p(d, "bad.jsonl"), "{\"id\": \"a\", \"vector\": {\"x\": 1.0}}\nnot json\n").unwrap();
    assert_eq!(
        spix(&["build", "--input", &p(d, "bad.jsonl"), "--output", &p(d, "x.spix")]).status.code(),
        Some(2)
    );
    fs::write(p(d, "ok.jsonl"), "{\"id\": \"a\", \"vector\": {\"x\": 1.0}}\n").unwrap();
    ok(&["build", "--input", &p(d, "ok.jsonl"), "--output", &p(d, "ok.spix")]);
    // A saved index holds quantized impacts only.
    assert_eq!(
        spix(&["prune", "--input", &p(d, "ok.spix"), "--method", "term-quantile", "--param", "0.5", "--output",
            &p(d, "y.spix")])
        .status
        .code(),
        Some(2)
    );
    // Invalid parameter values are usage errors.
    assert_eq!(
        spix(&["prune", "--input", &p(d, "ok.jsonl"), "--method", "term-quantile", "--param", "1.5", "--output",
            &p(d, "y.spix")])
        .status
        .code(),
        Some(1)
    );
    assert_eq!(
        spix(&["prune", "--input", &p(d, "ok.jsonl"), "--method", "dual-threshold", "--param", "0.5,1.0",
            "--output", &p(d, "y.spix")])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        spix(&["build", "--input", &p(d, "ok.jsonl"), "--output", &p(d, "z.spix"), "--quant-bits", "0"]).status.code(),
        Some(1)
    );
    fs::write(p(d, "garbage.spix"), b"SPIX\x07\x00\x00\x00").unwrap();
    fs::write(p(d, "q.jsonl"), "{\"id\": \"q\", \"vector\": {\"x\": 1.0}}\n").unwrap();
    assert_eq!(
        spix(&["search", "--index", &p(d, "garbage.spix"), "--queries", &p(d, "q.jsonl"), "--output", &p(d, "r")])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn evaluate_with_expansion_sidecar_and_corrections() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    gen(d, "21");
    let vectors = p(d, "vectors.jsonl");
    let mut sidecar = String::new();
    for i in 0..400 {
        sidecar.push_str(&format!("{{\"id\": \"D{i}\", \"expanded\": [\"t0\", \"t1\", \"t2\", \"t3\"]}}\n"));
    }
    fs::write(p(d, "exp.jsonl"), sidecar).unwrap();
    ok(&["prune", "--input", &vectors, "--method", "dual-threshold", "--param", "0.2,2.0", "--expanded",
        &p(d, "exp.jsonl"), "--output", &p(d, "dual.spix")]);
    ok(&["build", "--input", &vectors, "--output", &p(d, "base.spix")]);
    for (idx, run) in [("dual.spix", "dual.run"), ("base.spix", "base.run")] {
        ok(&["search", "--index", &p(d, idx), "--queries", &p(d, "queries.jsonl"), "--output", &p(d, run)]);
    }
    let out = ok(&["evaluate", "--run", &p(d, "dual.run"), "--qrels", &p(d, "qrels.txt"), "--compare",
        &p(d, "base.run"), "--metrics", "ndcg@10", "--corrections", "1000", "--gain", "exponential",
        "--output", &p(d, "eval.csv")]);
    assert!(out.stdout.is_empty());
    let csv = fs::read_to_string(p(d, "eval.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "ndcg");
    let pv: f64 = row[6].parse().unwrap();
    assert_eq!(row[7] == "true", pv <= 0.05 / 1000.0);
}
