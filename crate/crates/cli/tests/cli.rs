use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hptr::corpus::{parse_conllu, parse_rst_bracket};
use tempfile::TempDir;

fn hptr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hptr"))
        .args(args)
        .env("HPTR_THREADS", "1")
        .output()
        .expect("run hptr")
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

const SMALL_DEP: &[&str] = &[
    "--set", "encoder_size=16",
    "--set", "encoder_layers=1",
    "--set", "decoder_size=16",
    "--set", "arc_mlp=16",
    "--set", "label_mlp=8",
    "--set", "word_dim=8",
    "--set", "pos_dim=4",
    "--set", "char_dim=4",
    "--set", "char_filters=4",
    "--set", "batch_size=4",
];

const SMALL_RST: &[&str] = &[
    "--set", "word_dim=8",
    "--set", "encoder_size=8",
    "--set", "decoder_size=8",
    "--set", "label_mlp=8",
    "--set", "batch_size=4",
    "--set", "labels=corpus",
];

fn gen(dir: &Path, kind: &str, name: &str, seed: &str, count: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    let out = hptr(&["gen-data", "--kind", kind, "--seed", seed, "--count", count, "--max-len", "7", "--output", p(&path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn train(dir: &Path, task: &str, data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--task", task, "--train", p(data), "--dev", p(data), "--output", p(out), "--epochs", "2", "--seed", "3"];
    args.extend_from_slice(if task == "dep" { SMALL_DEP } else { SMALL_RST });
    args.extend_from_slice(extra);
    let _ = dir;
    hptr(&args)
}

#[test]
fn gen_data_writes_valid_corpora() {
    let dir = TempDir::new().unwrap();
    let dep = gen(dir.path(), "dep", "d.conllu", "5", "20");
    let corpus = parse_conllu(&fs::read_to_string(&dep).unwrap()).unwrap();
    assert_eq!(corpus.len(), 20);
    for (s, t) in &corpus {
        assert!(s.len() <= 7);
        t.validate(false).unwrap();
    }
    let rst = gen(dir.path(), "rst", "r.txt", "5", "15");
    let trees = parse_rst_bracket(&fs::read_to_string(&rst).unwrap()).unwrap();
    assert_eq!(trees.len(), 15);
    for t in &trees {
        t.validate().unwrap();
        assert!(t.num_edus() <= 7);
    }
    // Same seed, same bytes.
    let again = gen(dir.path(), "dep", "d2.conllu", "5", "20");
    assert_eq!(fs::read(&dep).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn training_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = gen(dir.path(), "dep", "train.conllu", "2", "12");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = train(dir.path(), "dep", &data, out, &[]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["train.log", "model.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    // The resolved configs differ only in the output directory.
    let config = |dir: &Path| -> Vec<String> {
        fs::read_to_string(dir.join("config.txt"))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("output"))
            .map(str::to_string)
            .collect()
    };
    assert_eq!(config(&a), config(&b));
    let log = fs::read_to_string(a.join("train.log")).unwrap();
    assert_eq!(log.lines().count(), 2);
    assert!(log.starts_with("epoch=1 loss="));
}

#[test]
fn invalid_variant_exits_1_without_output() {
    let dir = TempDir::new().unwrap();
    let data = gen(dir.path(), "dep", "train.conllu", "2", "4");
    let out = dir.path().join("run");
    let o = train(dir.path(), "dep", &data, &out, &["--variant", "PQ"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    assert!(!out.exists());
}

#[test]
fn missing_training_file_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let o = train(dir.path(), "dep", &dir.path().join("absent.conllu"), &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn dependency_parse_and_eval_round_trip() {
    let dir = TempDir::new().unwrap();
    let data = gen(dir.path(), "dep", "train.conllu", "4", "16");
    let run = dir.path().join("run");
    assert!(train(dir.path(), "dep", &data, &run, &[]).status.success());
    let pred = dir.path().join("pred.conllu");
    let trace = dir.path().join("trace.txt");
    let o = hptr(&[
        "parse", "--checkpoint", p(&run.join("model.json")), "--input", p(&data), "--output", p(&pred), "--beam", "3",
        "--trace", p(&trace),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let gold = parse_conllu(&fs::read_to_string(&data).unwrap()).unwrap();
    let parsed = parse_conllu(&fs::read_to_string(&pred).unwrap()).unwrap();
    assert_eq!(gold.len(), parsed.len());
    for ((gs, _), (ps, pt)) in gold.iter().zip(&parsed) {
        assert_eq!(gs.tokens, ps.tokens);
        pt.validate(false).unwrap();
    }
    assert!(!fs::read_to_string(&trace).unwrap().is_empty());

    // Gold against itself scores 100.
    let csv = dir.path().join("buckets.csv");
    let o = hptr(&["eval", "--task", "dep", "--gold", p(&data), "--pred", p(&data), "--include-punct", "--csv", p(&csv)]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text, "UAS\t100.00\nLAS\t100.00\n");
    let rows = fs::read_to_string(&csv).unwrap();
    let mut lines = rows.lines();
    assert_eq!(lines.next(), Some("bucket,metric,value,count"));
    let body: Vec<&str> = lines.collect();
    assert!(!body.is_empty());
    let mut counted = 0;
    for line in &body {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 4, "{line}");
        assert!(cols[1] == "uas" || cols[1] == "las", "{line}");
        assert_eq!(cols[2], "100.0000");
        if cols[1] == "uas" {
            counted += cols[3].parse::<usize>().unwrap();
        }
    }
    assert_eq!(counted, gold.len());

    // The prediction scores the same through eval as through the library.
    let o = hptr(&["eval", "--task", "dep", "--gold", p(&data), "--pred", p(&pred), "--include-punct"]);
    assert!(o.status.success());
    let report = hptr_cli::cmd_eval(
        hptr::config::Task::Dep,
        &data,
        &pred,
        &hptr_cli::EvalOptions {
            exclude_punct: false,
            include_root: true,
            bucket_width: 10,
        },
    )
    .unwrap();
    assert_eq!(String::from_utf8(o.stdout).unwrap(), report.text());
}

#[test]
fn discourse_parse_round_trip() {
    let dir = TempDir::new().unwrap();
    let data = gen(dir.path(), "rst", "train.txt", "6", "12");
    let run = dir.path().join("run");
    let o = train(dir.path(), "rst", &data, &run, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let model = run.join("model-span.json");
    assert!(model.exists());
    assert!(run.join("model-relation.json").exists());

    let gold = parse_rst_bracket(&fs::read_to_string(&data).unwrap()).unwrap();
    let lines: String = gold.iter().map(|t| t.edus.join(" ||| ") + "\n").collect();
    let input = dir.path().join("edus.txt");
    fs::write(&input, lines).unwrap();
    let pred = dir.path().join("pred.txt");
    let o = hptr(&["parse", "--checkpoint", p(&model), "--input", p(&input), "--output", p(&pred)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let parsed = parse_rst_bracket(&fs::read_to_string(&pred).unwrap()).unwrap();
    assert_eq!(parsed.len(), gold.len());
    for (g, t) in gold.iter().zip(&parsed) {
        t.validate().unwrap();
        assert_eq!(g.edus, t.edus);
    }
    let o = hptr(&["eval", "--task", "rst", "--gold", p(&data), "--pred", p(&pred)]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let keys: Vec<&str> = text.lines().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(keys, ["Span", "Nuclearity", "Relation"]);
}

#[test]
fn empty_input_gives_empty_output() {
    let dir = TempDir::new().unwrap();
    let data = gen(dir.path(), "dep", "train.conllu", "4", "6");
    let run = dir.path().join("run");
    assert!(train(dir.path(), "dep", &data, &run, &[]).status.success());
    let empty = dir.path().join("empty.conllu");
    fs::write(&empty, "").unwrap();
    let pred = dir.path().join("pred.conllu");
    let o = hptr(&["parse", "--checkpoint", p(&run.join("model.json")), "--input", p(&empty), "--output", p(&pred)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(&pred).unwrap(), "");
}

#[test]
fn label_hash_mismatch_exits_2() {
    let dir = TempDir::new().unwrap();
    let data = gen(dir.path(), "rst", "train.txt", "6", "8");
    let run = dir.path().join("run");
    assert!(train(dir.path(), "rst", &data, &run, &[]).status.success());
    let labels = dir.path().join("labels.txt");
    fs::write(&labels, "NS-Elaboration\nNN-Joint\nSN-Attribution-x\n").unwrap();
    let pred = dir.path().join("pred.txt");
    let o = hptr(&[
        "parse", "--checkpoint", p(&run.join("model-span.json")), "--input", p(&data), "--output", p(&pred), "--labels",
        p(&labels),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hash"));
    assert!(!pred.exists());
}

#[test]
fn zero_beam_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let data = gen(dir.path(), "dep", "train.conllu", "4", "4");
    let o = hptr(&["parse", "--checkpoint", p(&data), "--input", p(&data), "--output", p(&dir.path().join("o")), "--beam", "0"]);
    assert_eq!(o.status.code(), Some(1));
}
