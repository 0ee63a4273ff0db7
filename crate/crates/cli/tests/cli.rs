use std::path::Path;
use std::process::{Command, Output};

const FS: u32 = 44100;
const HEADER: &str = "subset,ref_path,test_path,method,beta,smos,raw_smos,median_os,raw_median_os,class";

fn omoq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_omoq")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn tone(secs: f64, seed: u32) -> Vec<f64> {
    let n = (secs * FS as f64) as usize;
    (0..n)
        .map(|i| {
            let t = i as f64 / FS as f64;
            let f = 220.0 * (1 + seed % 5) as f64;
            let env = 0.5 + 0.5 * (6.0 * t).sin().abs();
            let click = if i % 9000 < 40 { 0.5 } else { 0.0 };
            env * ((f * t * std::f64::consts::TAU).sin() + 0.3 * (3.1 * f * t * std::f64::consts::TAU).sin())
                + click
        })
        .collect()
}

/// Linear resampling to `len / beta` samples.
fn stretch(x: &[f64], beta: f64) -> Vec<f64> {
    let n = (x.len() as f64 / beta) as usize;
    (0..n)
        .map(|i| {
            let p = i as f64 * beta;
            let j = (p as usize).min(x.len() - 2);
            let f = p - j as f64;
            x[j] * (1.0 - f) + x[j + 1] * f
        })
        .collect()
}

fn write_wav(path: &Path, x: &[f64]) {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: FS,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for v in x {
        w.write_sample((v * 0.4 * 32767.0) as i16).unwrap();
    }
    w.finalize().unwrap();
}

/// Two references, five train pairs and three test pairs.
fn corpus(dir: &Path) -> std::path::PathBuf {
    let mut lines = vec![HEADER.to_string()];
    for r in 0..2 {
        let src = tone(1.2, r);
        write_wav(&dir.join(format!("ref{r}.wav")), &src);
        for (k, beta) in [0.5, 0.7, 0.9, 1.3].iter().enumerate() {
            let name = format!("t{r}_{k}.wav");
            write_wav(&dir.join(&name), &stretch(&src, *beta));
            let subset = if (r, k) == (1, 1) || k == 3 { "test" } else { "train" };
            let score = 1.5 + 0.8 * k as f64 + 0.3 * r as f64;
            lines.push(format!(
                "{subset},ref{r}.wav,{name},{},{beta},{score},{score},{},{},{}",
                ["pv", "ola"][k % 2],
                score.round(),
                score.round(),
                ["music", "solo"][r as usize]
            ));
        }
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&omoq(&["--help"])), 0);
    assert_eq!(code(&omoq(&["train", "--help"])), 0);
    assert_eq!(code(&omoq(&["features", "--bogus"])), 1);
    assert_eq!(code(&omoq(&[])), 1);
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path());
    let out = dir.path().join("f.csv");
    let o = omoq(&["features", "--manifest", s(&m), "--out", s(&out), "--alignment", "sideways"]);
    assert_eq!(code(&o), 1);
    let o = omoq(&["features", "--manifest", s(&m), "--out", s(&out), "--hop", "4096"]);
    assert_eq!(code(&o), 1);
    let o = omoq(&["features", "--manifest", s(&m), "--out", s(&out), "--beta", "-1"]);
    assert_eq!(code(&o), 1);
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[extraction]\nnonsense = 1\n").unwrap();
    let o = omoq(&["--config", s(&cfg), "features", "--manifest", s(&m), "--out", s(&out)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn missing_audio_fails_unless_skipped() {
    let dir = tempfile::tempdir().unwrap();
    write_wav(&dir.path().join("ref.wav"), &tone(1.0, 0));
    let m = dir.path().join("m.csv");
    std::fs::write(
        &m,
        format!("{HEADER}\ntest,ref.wav,ref.wav,none,1,5,5,5,5,voice\ntest,ref.wav,nowhere.wav,pv,0.5,2,2,2,2,voice\n"),
    )
    .unwrap();
    let out = dir.path().join("f.csv");
    let o = omoq(&["features", "--manifest", s(&m), "--out", s(&out)]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 2"));
    let o = omoq(&["features", "--manifest", s(&m), "--out", s(&out), "--skip-errors"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 3);
    let o = omoq(&["features", "--manifest", s(&dir.path().join("absent.csv")), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let m = corpus(d);
    let table = d.join("features.csv");
    let o = omoq(&["features", "--manifest", s(&m), "--out", s(&table), "--jobs", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&table).unwrap();
    assert!(text.starts_with("# schema=omoq-features-v1\n"));
    // Eight pairs plus two reference rows.
    assert_eq!(text.lines().count(), 2 + 10);
    assert!(text.lines().nth(2).unwrap().contains(",interp_test,"));

    let anchored = d.join("anchored.csv");
    let o = omoq(&[
        "features", "--manifest", s(&m), "--out", s(&anchored), "--alignment", "anchor_ref", "--no-include-refs",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&anchored).unwrap();
    assert_eq!(text.lines().count(), 2 + 8);
    assert!(text.lines().skip(2).all(|l| l.contains(",anchor_ref,")));

    let cfg = d.join("fast.toml");
    std::fs::write(&cfg, "[train.net]\nextension_epochs = 0\n").unwrap();
    let models = d.join("models");
    let o = omoq(&[
        "--config", s(&cfg), "train", "--table", s(&table), "--out", s(&models), "--seeds", "0..2", "--epochs", "15",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for seed in 0..3 {
        assert!(models.join(format!("model_seed{seed}.json")).exists());
        let hist = std::fs::read_to_string(models.join(format!("history_seed{seed}.csv"))).unwrap();
        assert_eq!(hist.lines().count(), 16);
    }
    let summary = std::fs::read_to_string(models.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    assert_eq!(summary.lines().filter(|l| l.ends_with(",true")).count(), 1);

    let o = omoq(&["train", "--table", s(&table), "--out", s(&models), "--target", "raw_median_os", "--epochs", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let model = models.join("model_seed0.json");
    let o = omoq(&[
        "predict", "--model", s(&model), "--ref", s(&d.join("ref0.wav")), "--test", s(&d.join("t0_1.wav")),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let score: f64 = String::from_utf8_lossy(&o.stdout).trim().parse().unwrap();
    assert!((1.0..=5.0).contains(&score));

    let results = d.join("results.csv");
    let o = omoq(&["predict", "--model", s(&model), "--manifest", s(&m), "--out", s(&results)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 8);

    let report = d.join("report");
    let o = omoq(&["evaluate", "--results", s(&results), "--out", s(&report)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["overall.csv", "overall.txt", "series_all.csv", "exclusions.csv", "class_music.csv"] {
        assert!(report.join(f).exists(), "{f}");
    }
    let report2 = d.join("report2");
    let o = omoq(&["evaluate", "--manifest", s(&m), "--model", s(&model), "--out", s(&report2)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read_to_string(report.join("overall.csv")).unwrap(),
        std::fs::read_to_string(report2.join("overall.csv")).unwrap()
    );

    let o = omoq(&["predict", "--model", s(&model), "--ref", s(&d.join("ref0.wav"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn missing_labels_and_schema_mismatch_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_wav(&d.join("ref.wav"), &tone(1.0, 2));
    write_wav(&d.join("a.wav"), &stretch(&tone(1.0, 2), 0.8));
    let m = d.join("m.csv");
    std::fs::write(
        &m,
        format!("{HEADER}\ntrain,ref.wav,a.wav,pv,0.8,3,,,,music\ntrain,ref.wav,a.wav,ola,0.8,3.5,,,,music\n"),
    )
    .unwrap();
    let table = d.join("f.csv");
    assert_eq!(code(&omoq(&["features", "--manifest", s(&m), "--out", s(&table)])), 0);
    let o = omoq(&[
        "train", "--table", s(&table), "--out", s(&d.join("m")), "--target", "raw_smos", "--selection", "train_val",
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));

    let text = std::fs::read_to_string(&table).unwrap();
    std::fs::write(&table, text.replacen("omoq-features-v1", "omoq-features-v0", 1)).unwrap();
    let o = omoq(&["train", "--table", s(&table), "--out", s(&d.join("m"))]);
    assert_eq!(code(&o), 2);

    let model = d.join("model.json");
    std::fs::write(&model, "{\"schema_version\": \"other\"}").unwrap();
    let o = omoq(&["predict", "--model", s(&model), "--ref", s(&d.join("ref.wav")), "--test", s(&d.join("a.wav"))]);
    assert_eq!(code(&o), 2);
}
