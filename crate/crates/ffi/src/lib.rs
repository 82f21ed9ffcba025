//! C interface to `kws-core`.
//!
//! Every function returns a [`KwsStatus`]. On failure the message is kept
//! per thread and can be read with [`kws_last_error`]. Strings handed out by
//! the library must be released with [`kws_string_free`]; handles with their
//! matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use kws_core::config::PipelineConfig;
use kws_core::decoder::NBestList;
use kws_core::phonetics::{parse_syllable, phrase_distance, CostTable, Syllable};
use kws_core::pipeline::{detect_all, DecodeMode, Decoded, Decoders, Resources, SynthUtt};
use kws_core::posteriorgram::{read_pgram, Posteriorgram};
use kws_core::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KwsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Io = 4,
    BadFormat = 5,
    UnitSetMismatch = 6,
    AlignmentInfeasible = 7,
    InvalidInput = 8,
    Panic = 9,
}

/// Which unit stream a call refers to.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KwsStream {
    Character = 0,
    Syllable = 1,
}

/// Loaded resources and settings from a pipeline config.
pub struct KwsEngine {
    cfg: PipelineConfig,
    res: Resources,
}

/// A posteriorgram in log-probabilities.
pub struct KwsPosteriorgram(Posteriorgram);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Fail(KwsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_) => KwsStatus::Config,
            Error::Io { .. } => KwsStatus::Io,
            Error::BadFormat(_) => KwsStatus::BadFormat,
            Error::UnitSetMismatch { .. } => KwsStatus::UnitSetMismatch,
            Error::AlignmentInfeasible { .. } => KwsStatus::AlignmentInfeasible,
            _ => KwsStatus::InvalidInput,
        };
        Fail(status, e.to_string())
    }
}

type FfiResult<T> = Result<T, Fail>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> KwsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KwsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside kws".into());
            KwsStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(KwsStatus::NullArgument, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(KwsStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> FfiResult<()> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn c_string(s: String) -> FfiResult<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(KwsStatus::InvalidInput, "output contains a NUL byte".into()))
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn kws_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn kws_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a pipeline config and every resource it names.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kws_engine_open(config_path: *const c_char, out: *mut *mut KwsEngine) -> KwsStatus {
    guard(|| {
        let path = str_arg(config_path, "config_path")?;
        let cfg = PipelineConfig::load(Path::new(path), &[])?;
        let res = Resources::load(&cfg)?;
        put(out, Box::into_raw(Box::new(KwsEngine { cfg, res })), "out")
    })
}

/// # Safety
/// `engine` must come from [`kws_engine_open`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn kws_engine_free(engine: *mut KwsEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Number of keywords the engine searches for.
///
/// # Safety
/// `engine` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kws_engine_keyword_count(engine: *const KwsEngine, out: *mut usize) -> KwsStatus {
    guard(|| {
        let engine = ref_arg(engine, "engine")?;
        put(out, engine.res.keywords.len(), "out")
    })
}

/// Reads a posteriorgram file (binary or JSON).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kws_pgram_read(path: *const c_char, out: *mut *mut KwsPosteriorgram) -> KwsStatus {
    guard(|| {
        let pg = read_pgram(str_arg(path, "path")?)?;
        put(out, Box::into_raw(Box::new(KwsPosteriorgram(pg))), "out")
    })
}

/// Builds a posteriorgram from `frames * vocab` row-major natural-log
/// probabilities. Column 0 is the blank.
///
/// # Safety
/// Strings must be NUL-terminated, `logp` must point to `frames * vocab`
/// floats and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kws_pgram_new(
    utt_id: *const c_char,
    unit_set_id: *const c_char,
    frame_period_s: f64,
    frames: usize,
    vocab: usize,
    logp: *const f32,
    out: *mut *mut KwsPosteriorgram,
) -> KwsStatus {
    guard(|| {
        let utt_id = str_arg(utt_id, "utt_id")?;
        let unit_set_id = str_arg(unit_set_id, "unit_set_id")?;
        let n = frames
            .checked_mul(vocab)
            .ok_or_else(|| Fail(KwsStatus::InvalidInput, "frames * vocab overflows".into()))?;
        let values = if n == 0 {
            Vec::new()
        } else if logp.is_null() {
            return Err(null("logp"));
        } else {
            std::slice::from_raw_parts(logp, n).to_vec()
        };
        let pg = Posteriorgram::new(utt_id, unit_set_id, frame_period_s, vocab, values)?;
        put(out, Box::into_raw(Box::new(KwsPosteriorgram(pg))), "out")
    })
}

/// # Safety
/// `pg` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn kws_pgram_free(pg: *mut KwsPosteriorgram) {
    if !pg.is_null() {
        drop(Box::from_raw(pg));
    }
}

/// # Safety
/// `pg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kws_pgram_frames(pg: *const KwsPosteriorgram, out: *mut usize) -> KwsStatus {
    guard(|| {
        let pg = ref_arg(pg, "pg")?;
        put(out, pg.0.frames(), "out")
    })
}

fn mode(cfg: &PipelineConfig) -> DecodeMode {
    DecodeMode {
        greedy: false,
        lm: true,
        bias: cfg.beam.bias_enabled,
    }
}

/// Decodes one stream with the engine's beam, LM and biasing settings and
/// returns the N-best list as a JSON object.
///
/// # Safety
/// Handles must be live; `out_json` must be writable. Free the result with
/// [`kws_string_free`].
#[no_mangle]
pub unsafe extern "C" fn kws_engine_decode(
    engine: *const KwsEngine,
    pg: *const KwsPosteriorgram,
    stream: KwsStream,
    out_json: *mut *mut c_char,
) -> KwsStatus {
    guard(|| {
        let engine = ref_arg(engine, "engine")?;
        let pg = &ref_arg(pg, "pg")?.0;
        let decoders = Decoders::new(&engine.res, mode(&engine.cfg), engine.cfg.beam_config(), &engine.cfg.bias_config())?;
        let decoder = match stream {
            KwsStream::Character => &decoders.char,
            KwsStream::Syllable => &decoders.syll,
        };
        let list = NBestList {
            utt_id: pg.utt_id().to_string(),
            hyps: decoder.decode(pg)?,
        };
        let json = serde_json::to_string(&list).map_err(|e| Fail(KwsStatus::BadFormat, e.to_string()))?;
        put(out_json, c_string(json)?, "out_json")
    })
}

/// Decodes both streams and runs keyword detection. The result holds one
/// hit per line: `utt_id kw_id start_s end_s score decision stage`,
/// tab-separated. `pg_syll` may be NULL, which disables syllable matching.
///
/// # Safety
/// Handles must be live or NULL where allowed; `out_tsv` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kws_engine_detect(
    engine: *const KwsEngine,
    pg_char: *const KwsPosteriorgram,
    pg_syll: *const KwsPosteriorgram,
    out_tsv: *mut *mut c_char,
) -> KwsStatus {
    guard(|| {
        let engine = ref_arg(engine, "engine")?;
        let cfg = &engine.cfg;
        let pg_char = ref_arg(pg_char, "pg_char")?.0.clone();
        let syll = pg_syll.as_ref().map(|p| p.0.clone());
        let mut kws_cfg = cfg.kws_config();
        if syll.is_none() {
            kws_cfg.stages.syllable = false;
        }
        let decoders = Decoders::new(&engine.res, mode(cfg), cfg.beam_config(), &cfg.bias_config())?;
        let decoded = Decoded {
            utt_id: pg_char.utt_id().to_string(),
            char: decoders.char.decode(&pg_char)?,
            syll: match &syll {
                Some(pg) => decoders.syll.decode(pg)?,
                None => Vec::new(),
            },
        };
        let utt = SynthUtt {
            utt_id: decoded.utt_id.clone(),
            pg_syll: syll.unwrap_or_else(|| pg_char.clone()),
            pg_char,
            refs: Vec::new(),
        };
        let hits = detect_all(&engine.res, &[utt], &[decoded], cfg.beam.nbest, &kws_cfg)?;
        let tsv: String = hits.iter().map(|h| format!("{}\n", h.to_tsv())).collect();
        put(out_tsv, c_string(tsv)?, "out_tsv")
    })
}

/// Log-probability that `units` is emitted within frames `[start, end)`
/// under CTC.
///
/// # Safety
/// `pg` must be live, `units` must point to `n_units` ids and `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn kws_score_ctc(
    pg: *const KwsPosteriorgram,
    units: *const u32,
    n_units: usize,
    start: usize,
    end: usize,
    out: *mut f64,
) -> KwsStatus {
    guard(|| {
        let pg = ref_arg(pg, "pg")?;
        let units = if n_units == 0 {
            &[][..]
        } else if units.is_null() {
            return Err(null("units"));
        } else {
            std::slice::from_raw_parts(units, n_units)
        };
        let score = kws_core::kws::score_ctc(&pg.0, units, (start, end))?;
        put(out, score, "out")
    })
}

fn syllables(text: &str) -> FfiResult<Vec<Syllable>> {
    Ok(text
        .split_whitespace()
        .map(parse_syllable)
        .collect::<Result<_, _>>()?)
}

/// Normalized pinyin edit distance between two space-separated syllable
/// strings such as `"zhong1 guo2"`. With a NULL engine the built-in cost
/// table is used.
///
/// # Safety
/// `a` and `b` must be NUL-terminated; `engine` must be live or NULL; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn kws_phrase_distance(
    engine: *const KwsEngine,
    a: *const c_char,
    b: *const c_char,
    out: *mut f64,
) -> KwsStatus {
    guard(|| {
        let a = syllables(str_arg(a, "a")?)?;
        let b = syllables(str_arg(b, "b")?)?;
        let default_costs;
        let costs = match engine.as_ref() {
            Some(engine) => &engine.res.costs,
            None => {
                default_costs = CostTable::default();
                &default_costs
            }
        };
        put(out, phrase_distance(&a, &b, costs), "out")
    })
}
