use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lexiforge::evaluation::{parse_tables_tsv, read_reports, render_tsv, write_reports, Protocol};
use lexiforge::lexicon::ParseOptions;
use lexiforge::pipeline::{
    read_lexicon, RunManifest, LOCK_FILE, MANIFEST_FILE, REPORTS_JSON_FILE, SOURCE_SPLIT_FILE, TARGET_MT_FILE,
    TARGET_PRED_FILE,
};
use lexiforge::synthetic::{generate, SyntheticPaths, SyntheticSpec};

fn lexiforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lexiforge"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn bundle(dir: &Path) -> SyntheticPaths {
    let spec = SyntheticSpec { vocab: 400, train: 120, dev: 20, test: 20, ..SyntheticSpec::default() };
    generate(&spec).write_to(&dir.join("data")).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn prepare_source_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let p = bundle(dir.path());
    let (a, b) = (dir.path().join("a.tsv"), dir.path().join("b.tsv"));
    for out in [&a, &b] {
        let stdout = ok(&lexiforge(&[
            "prepare-source",
            "--source",
            s(&p.raw_source),
            "--test-ref",
            s(&p.test_ref),
            "--dev-ref",
            s(&p.dev_ref),
            "--out",
            s(out),
        ]));
        assert!(stdout.contains("120") && stdout.contains("20"), "{stdout}");
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let lex = read_lexicon(&a, &ParseOptions::default()).unwrap();
    assert_eq!(lex.len(), 160);
    assert!(lex.entries().iter().all(|e| e.word != "Capital" && e.word != "ice cream"));
}

#[test]
fn empty_reference_lists_put_everything_in_train() {
    let dir = tempfile::tempdir().unwrap();
    let p = bundle(dir.path());
    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "").unwrap();
    let out = dir.path().join("all_train.tsv");
    ok(&lexiforge(&[
        "prepare-source",
        "--source",
        s(&p.raw_source),
        "--test-ref",
        s(&empty),
        "--dev-ref",
        s(&empty),
        "--out",
        s(&out),
    ]));
    let c = read_lexicon(&out, &ParseOptions::default()).unwrap().split_counts();
    assert_eq!((c.train, c.dev, c.test), (160, 0, 0));
}

fn run_synthetic(dir: &Path, p: &SyntheticPaths, out: &Path) -> Output {
    let config = dir.join("run.conf");
    fs::write(
        &config,
        format!(
            "# synthetic run\nsource = {}\ntest-ref = {}\ndev-ref = {}\nembeddings = {}\nepochs = 40\nseed = 1\nskip-translation = true\n",
            s(&p.raw_source),
            s(&p.test_ref),
            s(&p.dev_ref),
            s(&p.embeddings)
        ),
    )
    .unwrap();
    let gold = format!("syn={}", s(&p.gold));
    lexiforge(&["run", "--config", s(&config), "--out", s(out), "--seed", "3", "--gold", &gold])
}

#[test]
fn skip_translation_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = bundle(dir.path());
    let out = dir.path().join("run");
    let stdout = ok(&run_synthetic(dir.path(), &p, &out));
    assert!(stdout.contains("[silver]") && stdout.contains("[gold]"), "{stdout}");

    // TargetMT is the filtered source unchanged
    let opts = ParseOptions::unchecked();
    let mt = read_lexicon(&out.join(TARGET_MT_FILE), &opts).unwrap();
    let src = read_lexicon(&out.join(SOURCE_SPLIT_FILE), &opts).unwrap();
    assert_eq!(mt.entries(), src.entries());

    // flags override config, config overrides defaults
    let manifest = RunManifest::read(&out.join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.config.train.seed, 3);
    assert_eq!(manifest.config.train.epochs, 40);
    assert_eq!(manifest.config.gold.len(), 1);

    let reports = read_reports(&out.join(REPORTS_JSON_FILE)).unwrap();
    let silver = reports.iter().find(|r| r.protocol == Protocol::Silver).unwrap();
    assert_eq!(silver.n, 20);

    // evaluate recomputes the same silver scores from the written lexicons
    let json = dir.path().join("eval.json");
    ok(&lexiforge(&[
        "evaluate",
        "--mt",
        s(&out.join(TARGET_MT_FILE)),
        "--pred",
        s(&out.join(TARGET_PRED_FILE)),
        "--language",
        "en",
        "--json",
        s(&json),
    ]));
    let again = read_reports(&json).unwrap();
    assert_eq!(again.iter().find(|r| r.protocol == Protocol::Silver).unwrap(), silver);

    // replaying the manifest reproduces the predictions bitwise
    let replay = dir.path().join("replay");
    ok(&lexiforge(&["run", "--manifest", s(&out.join(MANIFEST_FILE)), "--out", s(&replay)]));
    assert_eq!(fs::read(out.join(TARGET_PRED_FILE)).unwrap(), fs::read(replay.join(TARGET_PRED_FILE)).unwrap());

    // a single silver report renders as a one-row table that survives a TSV round trip
    let single = dir.path().join("silver.json");
    write_reports(&single, std::slice::from_ref(silver)).unwrap();
    let tsv: PathBuf = dir.path().join("silver.tsv");
    let human = ok(&lexiforge(&["report", s(&single), "--tsv", s(&tsv)]));
    assert!(human.contains("[silver]"));
    let text = fs::read_to_string(&tsv).unwrap();
    let tables = parse_tables_tsv(&text).unwrap();
    assert_eq!(tables.len(), 1);
    assert_eq!(tables[0].rows.len(), 1);
    assert_eq!(render_tsv(&tables), text);
}

#[test]
fn locked_output_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let p = bundle(dir.path());
    let out = dir.path().join("run");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join(LOCK_FILE), "").unwrap();
    let res = run_synthetic(dir.path(), &p, &out);
    assert!(!res.status.success());
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("lock"), "{stderr}");
    assert!(!out.join(TARGET_PRED_FILE).exists());
}

#[test]
fn bad_config_key_fails() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.conf");
    fs::write(&config, "colour = red\n").unwrap();
    let res = lexiforge(&["run", "--config", s(&config)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("unknown key"));
}

#[test]
fn gradcheck_passes() {
    let stdout = ok(&lexiforge(&["gradcheck", "--seeds", "2"]));
    assert_eq!(stdout.lines().filter(|l| l.ends_with("ok")).count(), 2);
}
