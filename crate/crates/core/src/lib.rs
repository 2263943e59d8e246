//! Precoding-aided transmitter-side generalized spatial modulation for the
//! multi-user MIMO downlink: block-diagonalisation precoding, GSM mapping,
//! direct / minimum-power / sparse (AAR) transmit-signal generation,
//! OB-MMSE and ML detection, and a Monte-Carlo BER harness.

pub mod channel;
pub mod config;
pub mod constellation;
pub mod detect;
pub mod error;
pub mod gsm;
pub mod linalg;
pub mod precode;
pub mod rng;
pub mod sim;
pub mod txgen;
pub mod validate;

pub use channel::{draw_channel, sigma2_for_snr, ChannelSet, Dims, NoiseModel};
pub use constellation::{Constellation, Modulation};
pub use detect::{detect_ml, detect_obmmse, DetectorInput, ObMmse};
pub use error::{Error, Result};
pub use gsm::{bits_per_symbol, decode, encode, AicTable, BitBudget, GsmSymbol, ImParams, Variant};
pub use precode::{build_bd_precoder, PrecoderSet};
pub use rng::{Purpose, SeedTree};
pub use sim::{
    calibrate, flops_aar, flops_min_power, run_point, run_sweep, BerRecord, Calibration,
    DetectorKind, SimConfig, Simulator, TxSpec,
};
pub use txgen::{soft_threshold, tx_aar, tx_direct, tx_min_power, AarSettings, Lambda, TxMode, TxSignal};
