use std::path::Path;
use std::process::{Command, Output};

fn groupsketch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_groupsketch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = groupsketch(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Header and rows of a CSV document, after the config line.
fn table(doc: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = doc.lines();
    assert!(lines.next().unwrap().starts_with("# config: {"));
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn f(s: &str) -> f64 {
    s.parse().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn tradeoff_defaults() {
    let (header, rows) = table(&ok(&["tradeoff"]));
    assert_eq!(
        header.join(","),
        "schema_version,n,alphabet_size,p,surjection,output_symbols,eta0,eta1,C,S,V,n_times_V,source_entropy,dense"
    );
    assert_eq!(rows.len(), 300);
    let s = col(&header, "surjection");
    for name in ["identity", "all1", "majority"] {
        assert_eq!(rows.iter().filter(|r| r[s] == name).count(), 100);
    }
    assert!(rows.iter().all(|r| r[col(&header, "n")] == "16" && r[0] == "1"));
}

#[test]
fn tradeoff_single_identity_row() {
    let (header, rows) = table(&ok(&["tradeoff", "--p", "0.3", "--surjection", "identity"]));
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    let h = -(0.3f64 * 0.3f64.ln() + 0.7 * 0.7f64.ln());
    let sum = f(&r[col(&header, "V")]) + f(&r[col(&header, "S")]);
    assert!((sum - h).abs() < 1e-12, "{sum} vs {h}");
}

#[test]
fn tradeoff_dense_large_n() {
    let (header, rows) = table(&ok(&["tradeoff", "--n", "200", "--p", "0.5", "--surjection", "identity"]));
    let r = &rows[0];
    assert_eq!(r[col(&header, "dense")], "true");
    let nv = f(&r[col(&header, "n_times_V")]);
    assert!((nv - 0.5).abs() < 0.005, "{nv}");
}

#[test]
fn tradeoff_alpha_sets_p() {
    let (header, rows) = table(&ok(&["tradeoff", "--n", "10", "--alpha", "1,2", "--surjection", "all1"]));
    let p: Vec<f64> = rows.iter().map(|r| f(&r[col(&header, "p")])).collect();
    assert_eq!(p, vec![0.1, 0.2]);
}

#[test]
fn sweep_single_point_and_trends() {
    let (_, rows) = table(&ok(&["sweep-correlation", "--c", "0.8", "--families", "identity"]));
    assert_eq!(rows.len(), 1);

    // dense: both thresholds fixed at 0
    let cs = "0.5,0.6,0.7,0.8,0.9,0.95,0.99";
    let (header, rows) = table(&ok(&[
        "sweep-correlation", "--c", cs, "--families", "majority", "--grid-min", "0", "--grid-max", "0",
    ]));
    let v: Vec<f64> = rows.iter().map(|r| f(&r[col(&header, "V")])).collect();
    assert!(v.windows(2).all(|w| w[1] > w[0]), "{v:?}");

    // All-1 over a full grid only overtakes the dense majority scheme at high c
    let (header, rows) = table(&ok(&["sweep-correlation", "--families", "majority,all1"]));
    let (ci, fi, vi) = (col(&header, "c"), col(&header, "family"), col(&header, "V"));
    for pair in rows.chunks(2) {
        assert_eq!((pair[0][fi].as_str(), pair[1][fi].as_str()), ("majority", "all1"));
        if f(&pair[1][vi]) > f(&pair[0][vi]) {
            assert!(f(&pair[0][ci]) >= 0.9, "crossover at c = {}", pair[0][ci]);
        }
    }
}

#[test]
fn simulate_presets() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("easy.json");
    ok(&["simulate", "--runs", "1", "--groups", "2", "--m", "64", "--out", path_str(&json)]);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
    let cfg = &v["config"];
    assert_eq!(cfg["command"], "simulate");
    assert_eq!(cfg["preset"], "easy");
    assert_eq!(cfg["simulation"]["model"]["c"], 0.83);
    assert_eq!(cfg["simulation"]["model"]["dim"], 128);
    assert_eq!(v["result"]["histograms"]["bins"], 256);

    let out = ok(&["simulate", "--preset", "hard", "--runs", "1", "--groups", "2", "--d", "512"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let sim = &v["config"]["simulation"];
    assert_eq!(sim["model"]["c"], 0.68);
    assert_eq!(sim["model"]["dim"], 512);
    // m defaults to 8 d
    assert_eq!(sim["m"], 4096);
    assert_eq!(sim["runs"], 1);
}

#[test]
fn simulate_summary_and_templates() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let bin = dir.path().join("t.bin");
    ok(&[
        "simulate", "--runs", "3", "--groups", "2", "--m", "128",
        "--summary-out", path_str(&csv), "--templates-out", path_str(&bin),
    ]);
    let (header, rows) = table(&std::fs::read_to_string(&csv).unwrap());
    let scope = col(&header, "scope");
    let scopes: Vec<&str> = rows.iter().map(|r| r[scope].as_str()).collect();
    assert_eq!(scopes, ["run:0", "run:1", "run:2", "mean_run", "pooled"]);
    let pooled = rows.last().unwrap();
    assert!((0.0..=1.0).contains(&f(&pooled[col(&header, "pfn_at_pfp")])));

    let rows = groupsketch::embedding::templates::load_templates(&bin).unwrap();
    assert_eq!(rows.len(), 2 * 16);
    assert!(rows.iter().all(|r| r.len() == 128));
}

#[test]
fn replay_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cases: Vec<(Vec<&str>, &str)> = vec![
        (vec!["tradeoff", "--p", "0.1,0.5", "--eta0", "0.05", "--eta1", "0.1"], "a.csv"),
        (vec!["sweep-correlation", "--c", "0.7,0.95", "--grid-step", "0.5"], "b.csv"),
        (vec!["simulate", "--runs", "4", "--groups", "2", "--m", "96", "--seed", "5"], "c.json"),
        (vec!["simulate", "--mode", "sequence", "--runs", "2", "--m", "200", "--surjection", "greedy:3"], "d.json"),
        (vec!["reduce", "--runs", "2", "--groups", "2", "--m", "64", "--targets", "3"], "e.csv"),
        (vec!["bloom-compare", "--n", "16", "--probes", "200"], "f.json"),
        (vec!["optimize-surjection", "--n", "8", "--targets", "3,2"], "g.json"),
    ];
    for (args, name) in cases {
        let first = d.join(name);
        let again = d.join(format!("again-{name}"));
        let mut full = args.clone();
        full.extend(["--out", path_str(&first)]);
        ok(&full);
        let out = Command::new(env!("CARGO_BIN_EXE_groupsketch"))
            .args(["replay", path_str(&first), "--out", path_str(&again)])
            .env("GROUPSKETCH_THREADS", "1")
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(
            std::fs::read(&first).unwrap(),
            std::fs::read(&again).unwrap(),
            "{args:?}"
        );
    }
}

#[test]
fn reduce_series() {
    let (header, rows) = table(&ok(&["reduce", "--runs", "2", "--groups", "2", "--m", "128"]));
    let (path, sym, pfn, budget) = (
        col(&header, "path"),
        col(&header, "output_symbols"),
        col(&header, "pfn_at_pfp"),
        col(&header, "budget"),
    );
    let surj: Vec<&Vec<String>> = rows.iter().filter(|r| r[path] == "surjection").collect();
    let len: Vec<&Vec<String>> = rows.iter().filter(|r| r[path] == "length").collect();
    let sizes: Vec<&str> = surj.iter().map(|r| r[sym].as_str()).collect();
    assert_eq!(sizes, ["17", "8", "4", "3"]);
    assert_eq!(len.len(), 4);
    // at the full budget the identity row is shared by both series
    assert_eq!(surj[0][budget..], len[0][budget..]);
    assert_eq!(surj[0][pfn], len[0][pfn]);
}

#[test]
fn surjection_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("table.json");
    ok(&["optimize-surjection", "--n", "6", "--targets", "2", "--table-out", path_str(&t)]);
    let map: Vec<usize> = serde_json::from_str(&std::fs::read_to_string(&t).unwrap()).unwrap();
    assert_eq!(map.len(), 7);
    let spec = format!("file:{}", path_str(&t));
    let (header, rows) = table(&ok(&["tradeoff", "--n", "6", "--p", "0.5", "--surjection", &spec]));
    assert_eq!(rows[0][col(&header, "output_symbols")], "2");
    assert_eq!(rows[0][col(&header, "surjection")], "table");
}

#[test]
fn bloom_compare_defaults() {
    let v: serde_json::Value = serde_json::from_str(&ok(&["bloom-compare", "--probes", "500"])).unwrap();
    let r = &v["result"];
    assert_eq!(r["report"]["bounds_coincide"], true);
    assert_eq!(r["report"]["scheme_m"], 400);
    assert_eq!(r["bloom"]["false_negatives"], 0);
    assert_eq!(r["bloom"]["all_one_enrollment_identical"], true);
    assert_eq!(r["scheme"]["hard_rejected_positives"], 0);

    let v: serde_json::Value =
        serde_json::from_str(&ok(&["bloom-compare", "--epsilon", "1"])).unwrap();
    assert_eq!(v["result"]["report"]["degenerate"], true);
    assert!(v["result"]["bloom"].is_null());
}

#[test]
fn exit_codes() {
    let code = |args: &[&str]| groupsketch(args).status.code();
    // configuration errors
    assert_eq!(code(&["tradeoff", "--p", "1.5"]), Some(2));
    assert_eq!(code(&["tradeoff", "--alphabet", "3", "--p", "0.2", "--surjection", "majority"]), Some(2));
    assert_eq!(code(&["tradeoff", "--surjection", "median"]), Some(2));
    assert_eq!(code(&["simulate", "--runs", "0"]), Some(2));
    assert_eq!(code(&["bloom-compare", "--epsilon", "0"]), Some(2));
    assert_eq!(code(&["replay", "/nonexistent/file.csv"]), Some(2));
    assert_eq!(code(&["no-such-command"]), Some(2));
    // a threshold so high that P(X = 1) underflows
    assert_eq!(
        code(&["sweep-correlation", "--c", "0.9", "--grid-min", "40", "--grid-max", "40"]),
        Some(3)
    );
    let out = Command::new(env!("CARGO_BIN_EXE_groupsketch"))
        .args(["tradeoff", "--p", "0.5"])
        .env("GROUPSKETCH_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn atomic_write_replaces_existing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    std::fs::write(&out, "stale").unwrap();
    ok(&["tradeoff", "--p", "0.5", "--surjection", "identity", "--out", path_str(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# config: "));
    // nothing but the output is left behind
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}
