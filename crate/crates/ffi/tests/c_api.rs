use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use relex::corpus::{generate_synthetic_corpus, write_corpus, GenConfig, ReprMode};
use relex::encoder::EncoderConfig;
use relex::models::{train, ModelConfig, ModelKind, TrainConfig};
use relex_ffi::*;

struct Fixture {
    _dir: tempfile::TempDir,
    corpus: PathBuf,
    model: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let gen = GenConfig {
        train_bags: 60,
        test_bags: 20,
        ..GenConfig::default()
    };
    let data = generate_synthetic_corpus(&gen, 5).unwrap();
    let corpus = dir.path().join("test.jsonl");
    write_corpus(&corpus, &data.test).unwrap();
    let mut config = ModelConfig::new(ModelKind::CnnsAtt, ReprMode::Fget, false, data.inventory);
    config.encoder = EncoderConfig {
        word_dim: 8,
        position_dim: 2,
        widths: vec![2, 3],
        channels: 4,
        ..EncoderConfig::default()
    };
    let tc = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let outcome = train(config, &data.train, &tc).unwrap();
    let model = dir.path().join("model.json");
    outcome.model.save(&model, 0).unwrap();
    Fixture {
        _dir: dir,
        corpus,
        model,
    }
}

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(relex_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(relex_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn predict_and_explain_through_handles() {
    let f = fixture();
    unsafe {
        let mut corpus = ptr::null_mut();
        assert_eq!(relex_corpus_load(cpath(&f.corpus).as_ptr(), &mut corpus), RelexStatus::Ok);
        let mut model = ptr::null_mut();
        assert_eq!(relex_model_load(cpath(&f.model).as_ptr(), &mut model), RelexStatus::Ok);
        assert_eq!(relex_corpus_len(corpus), 20);
        let k = relex_model_num_relations(model);
        assert_eq!(k, 5);

        let mut probs = vec![0.0; k];
        assert_eq!(relex_model_predict(model, corpus, 0, probs.as_mut_ptr(), k), RelexStatus::Ok);
        assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
        assert_eq!(
            relex_model_predict(model, corpus, 0, probs.as_mut_ptr(), k - 1),
            RelexStatus::BufferTooSmall
        );
        assert!(last_error().contains("need 5"));

        let mut n = 0;
        assert_eq!(relex_corpus_bag_size(corpus, 0, &mut n), RelexStatus::Ok);
        let mut scores = vec![0.0; n];
        let mut written = 0;
        let status = relex_model_explain(
            model,
            corpus,
            0,
            1,
            RelexMethod::Attention,
            scores.as_mut_ptr(),
            n,
            &mut written,
        );
        assert_eq!(status, RelexStatus::Ok);
        assert_eq!(written, n);
        assert!((scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(last_error().is_empty());

        let status = relex_model_explain(
            model,
            corpus,
            0,
            99,
            RelexMethod::GradInput,
            scores.as_mut_ptr(),
            n,
            &mut written,
        );
        assert_eq!(status, RelexStatus::OutOfRange);
        assert_eq!(relex_corpus_bag_size(corpus, 999, &mut n), RelexStatus::OutOfRange);

        relex_model_free(model);
        relex_corpus_free(corpus);
    }
}

#[test]
fn load_errors_map_to_codes() {
    unsafe {
        let mut corpus = ptr::null_mut();
        let missing = CString::new("/nonexistent/relex.jsonl").unwrap();
        assert_eq!(relex_corpus_load(missing.as_ptr(), &mut corpus), RelexStatus::NotFound);
        assert!(corpus.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(relex_corpus_load(ptr::null(), &mut corpus), RelexStatus::NullPointer);
        let mut model = ptr::null_mut();
        assert_eq!(relex_model_load(missing.as_ptr(), &mut model), RelexStatus::NotFound);

        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.jsonl");
        std::fs::write(&bad, "{not json\n").unwrap();
        assert_eq!(relex_corpus_load(cpath(&bad).as_ptr(), &mut corpus), RelexStatus::Parse);
        relex_corpus_free(ptr::null_mut());
        relex_model_free(ptr::null_mut());
        assert_eq!(relex_corpus_len(ptr::null()), 0);
    }
}

#[test]
fn metrics_over_raw_arrays() {
    unsafe {
        let scores = [0.9, 0.8, 0.7, 0.6];
        let labels = [1u8, 0, 1, 0];
        let mut auc = 0.0;
        assert_eq!(relex_pr_auc(scores.as_ptr(), labels.as_ptr(), 4, &mut auc), RelexStatus::Ok);
        // points (0, 1), (0.5, 1), (1, 2/3); clipped at recall 0.4
        assert!((auc - 40.0).abs() < 1e-12);
        let none = [0u8; 4];
        assert_eq!(relex_pr_auc(scores.as_ptr(), none.as_ptr(), 4, &mut auc), RelexStatus::Eval);

        let pos = [0.9, 0.1, 0.5, 0.3];
        let neg = [0.2, 0.4, 0.5, 0.1];
        let mut tau = 0.0;
        assert_eq!(relex_kendall_tau(pos.as_ptr(), neg.as_ptr(), 4, &mut tau), RelexStatus::Ok);
        assert_eq!(tau, (2.0 - 1.0) / 4.0);
        assert_eq!(relex_kendall_tau(pos.as_ptr(), neg.as_ptr(), 0, &mut tau), RelexStatus::Eval);
    }
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/relex.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "relex_corpus_load",
        "relex_model_predict",
        "relex_model_explain",
        "relex_pr_auc",
        "relex_kendall_tau",
        "RELEX_STATUS_BUFFER_TOO_SMALL",
    ] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"relex.h\"\nint main(void) { RelexCorpus *c = 0; return (int)relex_corpus_len(c); }\n",
    )
    .unwrap();
    let status = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .status();
    match status {
        Ok(s) => assert!(s.success(), "header failed to compile"),
        Err(_) => eprintln!("no C compiler found; skipped compile check"),
    }
}
