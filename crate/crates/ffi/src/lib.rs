//! C ABI over `relex`. Corpora and models are opaque handles; every fallible
//! call returns a [`RelexStatus`] and leaves a message readable through
//! [`relex_last_error`] on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use relex::corpus::{load_corpus, Bag, CorpusError, ExplEvalTuple};
use relex::evalsuite::{kendall_tau, pr_auc, ScoreTable, ScoredPair};
use relex::explain::{explain_bag, Method};
use relex::models::{Model, ModelError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelexStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    NotFound = 3,
    Io = 4,
    Parse = 5,
    OutOfRange = 6,
    BufferTooSmall = 7,
    Model = 8,
    Eval = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelexMethod {
    Attention = 0,
    Saliency = 1,
    GradInput = 2,
    LeaveOneOut = 3,
}

impl From<RelexMethod> for Method {
    fn from(m: RelexMethod) -> Self {
        match m {
            RelexMethod::Attention => Method::Attention,
            RelexMethod::Saliency => Method::Saliency,
            RelexMethod::GradInput => Method::Gi,
            RelexMethod::LeaveOneOut => Method::Loo,
        }
    }
}

/// A loaded bag corpus.
pub struct RelexCorpus {
    bags: Vec<Bag>,
}

/// A loaded checkpoint.
pub struct RelexModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(status: RelexStatus, message: impl std::fmt::Display) -> RelexStatus {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
    status
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::default());
}

fn corpus_status(e: &CorpusError) -> RelexStatus {
    match e {
        CorpusError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
            RelexStatus::NotFound
        }
        CorpusError::Io { .. } => RelexStatus::Io,
        _ => RelexStatus::Parse,
    }
}

fn model_status(e: &ModelError) -> RelexStatus {
    match e {
        ModelError::Corpus(c) => corpus_status(c),
        ModelError::File { .. } => RelexStatus::Io,
        ModelError::RelationOutOfRange { .. } | ModelError::UnknownEntity { .. } => {
            RelexStatus::OutOfRange
        }
        ModelError::Eval(_) => RelexStatus::Eval,
        _ => RelexStatus::Model,
    }
}

fn guard(f: impl FnOnce() -> RelexStatus) -> RelexStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => set_error(RelexStatus::Panic, "internal panic"),
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, RelexStatus> {
    if path.is_null() {
        return Err(set_error(RelexStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(PathBuf::from)
        .map_err(|e| set_error(RelexStatus::InvalidUtf8, e))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn relex_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, empty after a success.
/// The pointer stays valid until the next relex call on the same thread.
#[no_mangle]
pub extern "C" fn relex_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a bag JSONL file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn relex_corpus_load(path: *const c_char, out: *mut *mut RelexCorpus) -> RelexStatus {
    guard(|| {
        if out.is_null() {
            return set_error(RelexStatus::NullPointer, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_corpus(&path) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(RelexCorpus { bags: c.bags }));
                RelexStatus::Ok
            }
            Err(e) => set_error(corpus_status(&e), e),
        }
    })
}

/// # Safety
/// `corpus` must come from [`relex_corpus_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn relex_corpus_free(corpus: *mut RelexCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Number of bags, 0 for a null handle.
///
/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn relex_corpus_len(corpus: *const RelexCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.bags.len())
}

/// Number of sentences in bag `index`.
///
/// # Safety
/// `corpus` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn relex_corpus_bag_size(
    corpus: *const RelexCorpus,
    index: usize,
    out: *mut usize,
) -> RelexStatus {
    guard(|| {
        let (Some(c), false) = (corpus.as_ref(), out.is_null()) else {
            return set_error(RelexStatus::NullPointer, "null argument");
        };
        match c.bags.get(index) {
            Some(b) => {
                *out = b.sentences.len();
                RelexStatus::Ok
            }
            None => set_error(RelexStatus::OutOfRange, format!("bag index {index} of {}", c.bags.len())),
        }
    })
}

/// Loads a checkpoint (and its `.meta.json` sidecar) into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn relex_model_load(path: *const c_char, out: *mut *mut RelexModel) -> RelexStatus {
    guard(|| {
        if out.is_null() {
            return set_error(RelexStatus::NullPointer, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        if !path.exists() {
            return set_error(RelexStatus::NotFound, format!("{} not found", path.display()));
        }
        match Model::load(&path) {
            Ok((model, _)) => {
                *out = Box::into_raw(Box::new(RelexModel { model }));
                RelexStatus::Ok
            }
            Err(e) => set_error(model_status(&e), e),
        }
    })
}

/// # Safety
/// `model` must come from [`relex_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn relex_model_free(model: *mut RelexModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of relation classes, 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn relex_model_num_relations(model: *const RelexModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.num_relations())
}

unsafe fn handles<'a>(
    model: *const RelexModel,
    corpus: *const RelexCorpus,
    index: usize,
) -> Result<(&'a Model, &'a Bag), RelexStatus> {
    let (Some(m), Some(c)) = (model.as_ref(), corpus.as_ref()) else {
        return Err(set_error(RelexStatus::NullPointer, "null handle"));
    };
    match c.bags.get(index) {
        Some(b) => Ok((&m.model, b)),
        None => Err(set_error(
            RelexStatus::OutOfRange,
            format!("bag index {index} of {}", c.bags.len()),
        )),
    }
}

/// Writes the probability of every relation for bag `index` into `out`,
/// which must hold at least [`relex_model_num_relations`] values.
///
/// # Safety
/// Handles must be live and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn relex_model_predict(
    model: *const RelexModel,
    corpus: *const RelexCorpus,
    index: usize,
    out: *mut f64,
    len: usize,
) -> RelexStatus {
    guard(|| {
        let (model, bag) = match handles(model, corpus, index) {
            Ok(h) => h,
            Err(s) => return s,
        };
        if out.is_null() {
            return set_error(RelexStatus::NullPointer, "out is null");
        }
        if len < model.num_relations() {
            return set_error(
                RelexStatus::BufferTooSmall,
                format!("need {} values, got {len}", model.num_relations()),
            );
        }
        match model.predict_bag(bag) {
            Ok(p) => {
                ptr::copy_nonoverlapping(p.as_ptr(), out, p.len());
                RelexStatus::Ok
            }
            Err(e) => set_error(model_status(&e), e),
        }
    })
}

/// Writes one importance score per sentence of bag `index` for `relation`.
/// `*written` receives the sentence count even when `len` is too small.
///
/// # Safety
/// Handles must be live, `out` must point to `len` writable doubles and
/// `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn relex_model_explain(
    model: *const RelexModel,
    corpus: *const RelexCorpus,
    index: usize,
    relation: usize,
    method: RelexMethod,
    out: *mut f64,
    len: usize,
    written: *mut usize,
) -> RelexStatus {
    guard(|| {
        let (model, bag) = match handles(model, corpus, index) {
            Ok(h) => h,
            Err(s) => return s,
        };
        if out.is_null() || written.is_null() {
            return set_error(RelexStatus::NullPointer, "null output");
        }
        *written = bag.sentences.len();
        if len < bag.sentences.len() {
            return set_error(
                RelexStatus::BufferTooSmall,
                format!("need {} values, got {len}", bag.sentences.len()),
            );
        }
        match explain_bag(model, bag, relation, &[method.into()]) {
            Ok(r) => {
                let s = &r[0].scores;
                ptr::copy_nonoverlapping(s.as_ptr(), out, s.len());
                RelexStatus::Ok
            }
            Err(e) => set_error(model_status(&e), e),
        }
    })
}

/// Area under the precision-recall curve up to recall 0.4, in percent.
/// `labels[i]` is nonzero for a correct prediction.
///
/// # Safety
/// `scores` and `labels` must each point to `n` readable values.
#[no_mangle]
pub unsafe extern "C" fn relex_pr_auc(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> RelexStatus {
    guard(|| {
        if scores.is_null() || labels.is_null() || out.is_null() {
            return set_error(RelexStatus::NullPointer, "null argument");
        }
        let scores = std::slice::from_raw_parts(scores, n);
        let labels = std::slice::from_raw_parts(labels, n);
        let preds: Vec<ScoredPair> = scores
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (&score, &l))| ScoredPair {
                bag_id: i as u64,
                relation: 0,
                score,
                label: l != 0,
            })
            .collect();
        match pr_auc(&preds) {
            Ok(c) => {
                *out = c.auc_04;
                RelexStatus::Ok
            }
            Err(e) => set_error(RelexStatus::Eval, e),
        }
    })
}

/// Kendall tau over `n` ordering tuples: tuple `i` is concordant when
/// `rationale[i] > irrelevant[i]`, discordant when smaller, and a tie
/// counts as neither.
///
/// # Safety
/// `rationale` and `irrelevant` must each point to `n` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn relex_kendall_tau(
    rationale: *const f64,
    irrelevant: *const f64,
    n: usize,
    out: *mut f64,
) -> RelexStatus {
    guard(|| {
        if rationale.is_null() || irrelevant.is_null() || out.is_null() {
            return set_error(RelexStatus::NullPointer, "null argument");
        }
        let pos = std::slice::from_raw_parts(rationale, n);
        let neg = std::slice::from_raw_parts(irrelevant, n);
        let mut table = ScoreTable::new();
        let mut tuples = Vec::with_capacity(n);
        for i in 0..n {
            table.insert((i as u64, 0), vec![pos[i], neg[i]]);
            tuples.push(ExplEvalTuple {
                bag_id: i as u64,
                relation: 0,
                rationale_idx: 0,
                irrelevant_idx: 1,
            });
        }
        match kendall_tau(&table, &tuples).map(|c| c.tau()) {
            Ok(Some(t)) => {
                *out = t;
                RelexStatus::Ok
            }
            Ok(None) => set_error(RelexStatus::Eval, "no tuples"),
            Err(e) => set_error(RelexStatus::Eval, e),
        }
    })
}
