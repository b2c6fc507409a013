use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 5
[synth]
train_count = 48
val_count = 16
test_count = 16
[train]
max_epochs = 2
[attack]
sample_size = 6
methods = ["ffa"]
modes = ["line_search"]
[report]
heatmap_cell = 4
"#;

fn attrflip(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attrflip"))
        .arg("--config")
        .arg(dir.join("tiny.toml"))
        .arg("--out")
        .arg(dir.join("run"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn setup(extra: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), format!("{TINY}{extra}")).unwrap();
    dir
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_header(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# seed=5"));
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    lines.next().unwrap().to_string()
}

#[test]
fn pipeline_writes_every_report_with_its_schema() {
    let dir = setup("");
    let o = attrflip(dir.path(), &["run"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let reports = dir.path().join("run/reports");
    assert_eq!(
        csv_header(&reports.join("flippability.csv")),
        "method,adv_type,tau,flipped,total,fraction"
    );
    assert_eq!(
        csv_header(&reports.join("overlap.csv")),
        "method,adv_type,count_early,count_converged,overlap"
    );
    assert_eq!(
        csv_header(&reports.join("natural.csv")),
        "method,misclassified,natural_adversarial,rate"
    );
    assert_eq!(
        csv_header(&reports.join("correlation.csv")),
        "source,count,Bright,Bar,Disk,Checker,Warm"
    );
    assert_eq!(
        csv_header(&reports.join("baseline.csv")),
        "attribute,majority_class,baseline_error,model_error"
    );
    assert_eq!(csv_header(&reports.join("ttest.csv")), "comparison,t,df,p_two_sided");
    let heat = std::fs::read(reports.join("correlation.pgm")).unwrap();
    assert!(heat.starts_with(b"P5\n20 20\n255\n"));

    // one row per threshold and source type
    let text = std::fs::read_to_string(reports.join("flippability.csv")).unwrap();
    assert_eq!(text.lines().count(), 3 + 2 * 2 * 4);

    // report is a pure function of the outcome files
    let before = std::fs::read(reports.join("flippability.csv")).unwrap();
    let o = attrflip(dir.path(), &["report"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(reports.join("flippability.csv")).unwrap(), before);

    // pass on two files from the dataset
    let a = dir.path().join("run/data/train/train_00000.ppm");
    let o = attrflip(dir.path(), &["pass", a.to_str().unwrap(), a.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["score"], 1.0);
    assert_eq!(v["adversarial"], true);

    let demo = dir.path().join("demo.ppm");
    let ckpt = dir.path().join("run/models/joint/converged.afm");
    let o = attrflip(
        dir.path(),
        &[
            "demo",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--image",
            a.to_str().unwrap(),
            "--attribute",
            "Disk",
            "--output",
            demo.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::read(&demo).unwrap().starts_with(b"P6\n100 32\n255\n"));
}

#[test]
fn report_without_outcomes_fails_and_names_the_file() {
    let dir = setup("");
    let o = attrflip(dir.path(), &["report"]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(
        err.contains("missing outcome file") && err.contains("joint_ffa_line_search.jsonl"),
        "{err}"
    );
}

#[test]
fn invalid_configurations_are_rejected() {
    for extra in [
        "[pass]\ntau = 1.5\n",
        "[report]\nthresholds = [0.5, 2.0]\n",
        "[model]\njoint = false\n",
    ] {
        let dir = tempfile::tempdir().unwrap();
        let text = TINY.replace("[report]\nheatmap_cell = 4\n", "");
        std::fs::write(dir.path().join("tiny.toml"), format!("{text}{extra}")).unwrap();
        let o = attrflip(dir.path(), &["synth"]);
        assert!(!o.status.success(), "accepted: {extra}");
        assert!(stderr(&o).starts_with("error:"), "{}", stderr(&o));
    }
    let dir = setup("");
    let o = attrflip(dir.path(), &["pass", "nope.ppm", "nope.ppm"]);
    assert!(!o.status.success());
}

#[test]
fn same_seed_same_dataset() {
    let a = setup("");
    let b = setup("");
    for d in [&a, &b] {
        assert!(attrflip(d.path(), &["synth"]).status.success());
    }
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join("run/data").join(f)).unwrap();
    assert_eq!(read(&a, "manifest.json"), read(&b, "manifest.json"));
    assert_eq!(read(&a, "train/labels.txt"), read(&b, "train/labels.txt"));
    assert_eq!(read(&a, "train/train_00007.ppm"), read(&b, "train/train_00007.ppm"));
}

#[test]
fn resume_continues_from_the_newest_checkpoint() {
    let dir = setup("");
    assert!(attrflip(dir.path(), &["synth"]).status.success());
    assert!(attrflip(dir.path(), &["train"]).status.success());
    let models = dir.path().join("run/models/joint");
    assert!(models.join("epoch_002.afm").exists());
    std::fs::write(
        dir.path().join("tiny.toml"),
        TINY.replace("max_epochs = 2", "max_epochs = 3"),
    )
    .unwrap();
    let o = attrflip(dir.path(), &["train", "--resume"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(models.join("epoch_003.afm").exists());
    let metrics = std::fs::read_to_string(models.join("metrics.csv")).unwrap();
    let epochs: Vec<&str> = metrics.lines().skip(3).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(epochs, ["1", "2", "3"]);
}
