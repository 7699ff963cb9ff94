//! C ABI over the qrep library.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_build`
//! functions and released with the matching `*_free`. Every fallible call
//! returns a [`QrepStatus`]; on failure `qrep_last_error` describes the most
//! recent error on the calling thread. Mixed profiles are passed as one flat
//! array: player 0's weights, then player 1's, and so on.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qrep::dynamics::{project_simplex, q_gradient};
use qrep::equilibrium::check_strict;
use qrep::game::RepeatedGameSpec;
use qrep::strategy::StrategyProfile;
use qrep::valuation::{MetaGame, MetaGameOptions};
use qrep::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QrepStatus {
    Ok = 0,
    InvalidArgument = 1,
    Capacity = 2,
    Parse = 3,
    Internal = 4,
    NullPointer = 5,
    Panic = 6,
}

/// Repeated game: stage game, monitoring, continuation probability and recalls.
pub struct QrepSpec(RepeatedGameSpec);

/// Meta-game over enumerated pure strategies of a spec.
pub struct QrepMetaGame(MetaGame);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(e: Error) -> QrepStatus {
    let status = match &e {
        Error::InvalidArgument(_) => QrepStatus::InvalidArgument,
        Error::Capacity { .. } => QrepStatus::Capacity,
        Error::Parse(_) => QrepStatus::Parse,
        Error::Internal(_) | Error::Io(_) => QrepStatus::Internal,
    };
    set_error(e.to_string());
    status
}

fn guard(f: impl FnOnce() -> Result<(), QrepStatus>) -> QrepStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QrepStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside qrep".into());
            QrepStatus::Panic
        }
    }
}

fn null(what: &str) -> QrepStatus {
    set_error(format!("{what} is null"));
    QrepStatus::NullPointer
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, QrepStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(Error::InvalidArgument(format!("{what} is not UTF-8"))))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], QrepStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, need: usize, what: &str) -> Result<&'a mut [f64], QrepStatus> {
    if len < need {
        return Err(fail(Error::InvalidArgument(format!("{what} holds {len} entries, {need} needed"))));
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn meta_ref<'a>(m: *const QrepMetaGame) -> Result<&'a MetaGame, QrepStatus> {
    m.as_ref().map(|m| &m.0).ok_or_else(|| null("meta-game handle"))
}

fn profile_from_flat(meta: &MetaGame, flat: &[f64]) -> Result<StrategyProfile, QrepStatus> {
    let counts = meta.strategy_counts();
    let total: usize = counts.iter().sum();
    if flat.len() != total {
        return Err(fail(Error::InvalidArgument(format!(
            "profile has {} weights, meta-game needs {total}",
            flat.len()
        ))));
    }
    let mut at = 0;
    let weights = counts
        .iter()
        .map(|&c| {
            at += c;
            flat[at - c..at].to_vec()
        })
        .collect();
    StrategyProfile::new(meta.strategy_space(), weights).map_err(fail)
}

/// Copies the last error message on this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length, 0 if there is none.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn qrep_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Static, NUL-terminated library version.
#[no_mangle]
pub extern "C" fn qrep_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Built-in scenario (`pd_standard`, `matching_pennies`, `pd_variant_noisy(e1,e2,e3)`).
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qrep_spec_from_scenario(
    name: *const c_char,
    delta: f64,
    recall: usize,
    out: *mut *mut QrepSpec,
) -> QrepStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let name = str_arg(name, "name")?;
        let spec = qrep::scenario::load_scenario(name, delta, recall).map_err(fail)?;
        *out = Box::into_raw(Box::new(QrepSpec(spec)));
        Ok(())
    })
}

/// Spec from game-file text (TOML).
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qrep_spec_from_toml(text: *const c_char, out: *mut *mut QrepSpec) -> QrepStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(text, "text")?;
        let spec = qrep::io::parse_game(text)
            .and_then(|g| g.to_spec(None, None))
            .map_err(fail)?;
        *out = Box::into_raw(Box::new(QrepSpec(spec)));
        Ok(())
    })
}

/// # Safety
/// `spec` must be null or a handle from `qrep_spec_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qrep_spec_free(spec: *mut QrepSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Enumerates pure strategies and fills the meta-game. `exploration` is the
/// ε of the ε-executed game (0 for the plain game).
///
/// # Safety
/// `spec` must be a live spec handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qrep_meta_game_build(
    spec: *const QrepSpec,
    exploration: f64,
    out: *mut *mut QrepMetaGame,
) -> QrepStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = spec.as_ref().ok_or_else(|| null("spec handle"))?;
        let opts = MetaGameOptions {
            exploration,
            ..Default::default()
        };
        let meta = MetaGame::build(&spec.0, opts).map_err(fail)?;
        *out = Box::into_raw(Box::new(QrepMetaGame(meta)));
        Ok(())
    })
}

/// # Safety
/// `meta` must be null or a handle from `qrep_meta_game_build` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qrep_meta_game_free(meta: *mut QrepMetaGame) {
    if !meta.is_null() {
        drop(Box::from_raw(meta));
    }
}

/// # Safety
/// `meta` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qrep_meta_game_player_count(meta: *const QrepMetaGame, out: *mut usize) -> QrepStatus {
    guard(|| {
        let meta = meta_ref(meta)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = meta.player_count();
        Ok(())
    })
}

/// Number of pure strategies of `player`.
///
/// # Safety
/// `meta` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qrep_meta_game_strategy_count(
    meta: *const QrepMetaGame,
    player: usize,
    out: *mut usize,
) -> QrepStatus {
    guard(|| {
        let meta = meta_ref(meta)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = *meta
            .strategy_counts()
            .get(player)
            .ok_or_else(|| fail(Error::InvalidArgument(format!("no player {player}"))))?;
        Ok(())
    })
}

/// Expected discounted value of a mixed profile for every player.
///
/// # Safety
/// `weights` must hold `weights_len` doubles and `values` `values_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qrep_meta_game_value(
    meta: *const QrepMetaGame,
    weights: *const f64,
    weights_len: usize,
    values: *mut f64,
    values_len: usize,
) -> QrepStatus {
    guard(|| {
        let meta = meta_ref(meta)?;
        let profile = profile_from_flat(meta, slice_arg(weights, weights_len, "weights")?)?;
        let out = out_slice(values, values_len, meta.player_count(), "values")?;
        out.copy_from_slice(&meta.mixed_value(&profile));
        Ok(())
    })
}

/// q-gradient of a mixed profile, flattened like the weights.
///
/// # Safety
/// `weights` must hold `weights_len` doubles and `gradient` `gradient_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qrep_meta_game_q_gradient(
    meta: *const QrepMetaGame,
    weights: *const f64,
    weights_len: usize,
    q: f64,
    gradient: *mut f64,
    gradient_len: usize,
) -> QrepStatus {
    guard(|| {
        let meta = meta_ref(meta)?;
        let profile = profile_from_flat(meta, slice_arg(weights, weights_len, "weights")?)?;
        let g = q_gradient(meta, &profile, q).map_err(fail)?;
        let out = out_slice(gradient, gradient_len, weights_len, "gradient")?;
        for (o, x) in out.iter_mut().zip(g.iter().flatten()) {
            *o = *x;
        }
        Ok(())
    })
}

/// Brute-force certification: `verdict` is 0 strict, 1 equilibrium but not
/// strict, 2 not an equilibrium (the CLI's check-eq exit codes).
///
/// # Safety
/// `weights` must hold `weights_len` doubles; `verdict` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qrep_meta_game_check_strict(
    meta: *const QrepMetaGame,
    weights: *const f64,
    weights_len: usize,
    verdict: *mut c_int,
) -> QrepStatus {
    guard(|| {
        let meta = meta_ref(meta)?;
        let profile = profile_from_flat(meta, slice_arg(weights, weights_len, "weights")?)?;
        if verdict.is_null() {
            return Err(null("verdict"));
        }
        let r = check_strict(meta, &profile);
        *verdict = if r.is_strict {
            0
        } else if r.is_equilibrium {
            1
        } else {
            2
        };
        Ok(())
    })
}

/// Euclidean projection of `point` onto the probability simplex; `out` may alias `point`.
///
/// # Safety
/// `point` and `out` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qrep_project_simplex(point: *const f64, len: usize, out: *mut f64) -> QrepStatus {
    guard(|| {
        if len == 0 {
            return Err(fail(Error::InvalidArgument("cannot project onto an empty simplex".into())));
        }
        let x = slice_arg(point, len, "point")?.to_vec();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(fail(Error::InvalidArgument("point has non-finite entries".into())));
        }
        let out = out_slice(out, len, len, "out")?;
        out.copy_from_slice(&project_simplex(&x));
        Ok(())
    })
}
