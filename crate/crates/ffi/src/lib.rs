//! C ABI for the ptsdim simulator.
//!
//! Objects are opaque handles created by `*_new` and released by `*_free`.
//! Every fallible call returns a [`PtsdimStatus`]; on failure the message is
//! available from [`ptsdim_last_error`] on the same thread until the next
//! failing call. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ptsdim::config::Experiment;
use ptsdim::gsm::{bits_per_symbol, decode, encode, AicTable, GsmSymbol, ImParams, Variant};
use ptsdim::linalg::C64;
use ptsdim::sim::{flops_aar, flops_min_power, BerRecord, Simulator};
use ptsdim::txgen::soft_threshold;
use ptsdim::{Error, Modulation};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtsdimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidConfig = 2,
    Contract = 3,
    Decode = 4,
    Numerical = 5,
    InvalidUtf8 = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Statistics of one SNR point.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PtsdimBerRecord {
    pub snr_db: f64,
    pub sigma2: f64,
    pub ber: f64,
    pub bits_sent: u64,
    pub bit_errors: u64,
    pub symbols_sent: u64,
    pub aic_errors: u64,
    pub symbol_errors: u64,
    pub mean_tx_power: f64,
    pub mean_residual: f64,
    pub mean_active_antennas: f64,
}

impl From<&BerRecord> for PtsdimBerRecord {
    fn from(r: &BerRecord) -> Self {
        Self {
            snr_db: r.snr_db,
            sigma2: r.sigma2,
            ber: r.ber,
            bits_sent: r.bits_sent,
            bit_errors: r.bit_errors,
            symbols_sent: r.symbols_sent,
            aic_errors: r.aic_errors,
            symbol_errors: r.symbol_errors,
            mean_tx_power: r.mean_tx_power,
            mean_residual: r.mean_residual,
            mean_active_antennas: r.mean_active_antennas,
        }
    }
}

/// One curve of an experiment, ready to run.
pub struct PtsdimSimulator {
    inner: Simulator,
}

/// GSM bit mapper for one parameter set.
pub struct PtsdimCodec {
    params: ImParams,
    table: AicTable,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: PtsdimStatus, msg: impl Into<String>) -> PtsdimStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> PtsdimStatus {
    let status = match e {
        Error::Config(_) => PtsdimStatus::InvalidConfig,
        Error::Contract(_) => PtsdimStatus::Contract,
        Error::Decode(_) => PtsdimStatus::Decode,
        Error::Numerical(_) => PtsdimStatus::Numerical,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> PtsdimStatus) -> PtsdimStatus {
    catch_unwind(AssertUnwindSafe(f))
        .unwrap_or_else(|_| fail(PtsdimStatus::Panic, "internal panic"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, PtsdimStatus> {
    if p.is_null() {
        return Err(fail(PtsdimStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(PtsdimStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// Message of the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ptsdim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ptsdim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a simulator from TOML experiment text. `curve` selects a curve by
/// label; null selects the first. Calibration runs here.
///
/// # Safety
/// `toml` and `curve` (if non-null) must be NUL-terminated strings; `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ptsdim_simulator_new(
    toml: *const c_char,
    curve: *const c_char,
    out: *mut *mut PtsdimSimulator,
) -> PtsdimStatus {
    guard(|| {
        if out.is_null() {
            return fail(PtsdimStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let text = match str_arg(toml, "toml") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let label = if curve.is_null() {
            None
        } else {
            match str_arg(curve, "curve") {
                Ok(c) => Some(c),
                Err(s) => return s,
            }
        };
        let exp = match Experiment::from_toml_str(text) {
            Ok(e) => e,
            Err(e) => return from_error(e),
        };
        let configs = match exp.sim_configs() {
            Ok(c) => c,
            Err(e) => return from_error(e),
        };
        let chosen = match label {
            None => configs.into_iter().next(),
            Some(l) => configs.into_iter().find(|(name, _)| name == l),
        };
        let Some((_, cfg)) = chosen else {
            return fail(PtsdimStatus::InvalidConfig, "no curve with that label");
        };
        match Simulator::new(cfg) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(PtsdimSimulator { inner }));
                PtsdimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Runs one SNR point.
///
/// # Safety
/// `sim` must come from [`ptsdim_simulator_new`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ptsdim_simulator_run_point(
    sim: *const PtsdimSimulator,
    snr_db: f64,
    out: *mut PtsdimBerRecord,
) -> PtsdimStatus {
    guard(|| {
        if sim.is_null() || out.is_null() {
            return fail(PtsdimStatus::NullPointer, "simulator or out is null");
        }
        match (*sim).inner.run_point(snr_db) {
            Ok(r) => {
                *out = PtsdimBerRecord::from(&r);
                PtsdimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Calibration constants: mean received energy per user and mean direct
/// transmit power.
///
/// # Safety
/// `sim` must come from [`ptsdim_simulator_new`]; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ptsdim_simulator_calibration(
    sim: *const PtsdimSimulator,
    rx_energy: *mut f64,
    tx_power: *mut f64,
) -> PtsdimStatus {
    if sim.is_null() || rx_energy.is_null() || tx_power.is_null() {
        return fail(PtsdimStatus::NullPointer, "null argument");
    }
    let c = (*sim).inner.calibration();
    *rx_energy = c.rx_energy;
    *tx_power = c.tx_power;
    PtsdimStatus::Ok
}

/// # Safety
/// `sim` must come from [`ptsdim_simulator_new`] or be null; it must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ptsdim_simulator_free(sim: *mut PtsdimSimulator) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Creates a bit mapper. `order` is the constellation size (QAM for even
/// bit counts, PSK otherwise); `reduced` selects the repeated-symbol variant.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ptsdim_codec_new(
    n_s: usize,
    n_a: usize,
    order: usize,
    reduced: bool,
    out: *mut *mut PtsdimCodec,
) -> PtsdimStatus {
    guard(|| {
        if out.is_null() {
            return fail(PtsdimStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        match make_params(n_s, n_a, order, reduced) {
            Ok(params) => {
                let table = AicTable::build(&params);
                *out = Box::into_raw(Box::new(PtsdimCodec { params, table }));
                PtsdimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

fn make_params(n_s: usize, n_a: usize, order: usize, reduced: bool) -> ptsdim::Result<ImParams> {
    let variant = if reduced { Variant::Reduced } else { Variant::Full };
    ImParams::new(n_s, n_a, Modulation::new(order)?, variant)
}

/// Bits carried by one user symbol, or 0 for a null codec.
///
/// # Safety
/// `codec` must come from [`ptsdim_codec_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn ptsdim_codec_bits_per_user(codec: *const PtsdimCodec) -> usize {
    if codec.is_null() {
        0
    } else {
        (*codec).params.bits_per_user()
    }
}

/// Maps `n_bits` bits (one per byte, 0 or 1) to a dense length-`n_s` symbol
/// written as interleaved real/imaginary pairs into `out` (length `out_len`
/// doubles, at least `2·n_s`).
///
/// # Safety
/// `bits` must hold `n_bits` bytes and `out` `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ptsdim_codec_encode(
    codec: *const PtsdimCodec,
    bits: *const u8,
    n_bits: usize,
    out: *mut f64,
    out_len: usize,
) -> PtsdimStatus {
    guard(|| {
        if codec.is_null() || bits.is_null() || out.is_null() {
            return fail(PtsdimStatus::NullPointer, "null argument");
        }
        let c = &*codec;
        let n_s = c.params.n_s();
        if out_len < 2 * n_s {
            return fail(PtsdimStatus::BufferTooSmall, format!("need {} doubles", 2 * n_s));
        }
        let bits = std::slice::from_raw_parts(bits, n_bits);
        if bits.iter().any(|&b| b > 1) {
            return fail(PtsdimStatus::Contract, "bits must be 0 or 1");
        }
        match encode(bits, &c.params, &c.table) {
            Ok(sym) => {
                let out = std::slice::from_raw_parts_mut(out, 2 * n_s);
                for (i, v) in sym.densify(n_s).iter().enumerate() {
                    out[2 * i] = v.re;
                    out[2 * i + 1] = v.im;
                }
                PtsdimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Inverse of [`ptsdim_codec_encode`]: reads `2·n_s` doubles and writes
/// `bits_per_user` bits. Non-zero entries mark the active positions.
///
/// # Safety
/// `symbol` must hold `symbol_len` doubles and `bits` `n_bits` bytes.
#[no_mangle]
pub unsafe extern "C" fn ptsdim_codec_decode(
    codec: *const PtsdimCodec,
    symbol: *const f64,
    symbol_len: usize,
    bits: *mut u8,
    n_bits: usize,
) -> PtsdimStatus {
    guard(|| {
        if codec.is_null() || symbol.is_null() || bits.is_null() {
            return fail(PtsdimStatus::NullPointer, "null argument");
        }
        let c = &*codec;
        let n_s = c.params.n_s();
        if symbol_len != 2 * n_s {
            return fail(PtsdimStatus::Contract, format!("expected {} doubles", 2 * n_s));
        }
        if n_bits < c.params.bits_per_user() {
            return fail(
                PtsdimStatus::BufferTooSmall,
                format!("need {} bits", c.params.bits_per_user()),
            );
        }
        let raw = std::slice::from_raw_parts(symbol, symbol_len);
        let mut sym = GsmSymbol {
            aic: Vec::new(),
            values: Vec::new(),
        };
        for i in 0..n_s {
            let v = C64::new(raw[2 * i], raw[2 * i + 1]);
            if v != C64::new(0.0, 0.0) {
                sym.aic.push(i);
                sym.values.push(v);
            }
        }
        match decode(&sym, &c.params, &c.table) {
            Ok(b) => {
                std::slice::from_raw_parts_mut(bits, b.len()).copy_from_slice(&b);
                PtsdimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `codec` must come from [`ptsdim_codec_new`] or be null; it must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ptsdim_codec_free(codec: *mut PtsdimCodec) {
    if !codec.is_null() {
        drop(Box::from_raw(codec));
    }
}

/// Per-user and total bits per channel use.
///
/// # Safety
/// Output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ptsdim_bits_per_symbol(
    n_s: usize,
    n_a: usize,
    order: usize,
    reduced: bool,
    n_u: usize,
    per_user: *mut usize,
    total: *mut usize,
) -> PtsdimStatus {
    guard(|| {
        if per_user.is_null() || total.is_null() {
            return fail(PtsdimStatus::NullPointer, "null output");
        }
        match make_params(n_s, n_a, order, reduced) {
            Ok(p) => {
                let b = bits_per_symbol(&p, n_u);
                *per_user = b.per_user;
                *total = b.total;
                PtsdimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

#[no_mangle]
pub extern "C" fn ptsdim_flops_min_power(n_u: usize, n_rx: usize, n_tx: usize) -> f64 {
    flops_min_power(n_u, n_rx, n_tx)
}

#[no_mangle]
pub extern "C" fn ptsdim_flops_aar(n_u: usize, n_rx: usize, n_tx: usize, n_on: usize, q: usize) -> f64 {
    flops_aar(n_u, n_rx, n_tx, n_on, q)
}

/// Complex soft threshold of `re + i·im` at level `v`.
///
/// # Safety
/// Output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ptsdim_soft_threshold(
    re: f64,
    im: f64,
    v: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> PtsdimStatus {
    if out_re.is_null() || out_im.is_null() {
        return fail(PtsdimStatus::NullPointer, "null output");
    }
    if !(v >= 0.0) {
        return fail(PtsdimStatus::Contract, "threshold must be non-negative");
    }
    let s = soft_threshold(C64::new(re, im), v);
    *out_re = s.re;
    *out_im = s.im;
    PtsdimStatus::Ok
}
