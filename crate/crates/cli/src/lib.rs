//! Command-line front end for the cavity molecular-dynamics engine.
//!
//! The binary exposes five verbs — `surfaces`, `propagate`, `invert`,
//! `qcl`, and `verify` — driven by a flat `key = value` configuration file
//! plus repeatable `--override key=value` flags. See `config` for the key
//! schema and `output` for the on-disk layout.

pub mod config;
pub mod output;
pub mod verify;
