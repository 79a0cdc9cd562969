//! Browser bindings for `www/index.html`: lift a listing, execute a contract
//! without a solver and evaluate the ChaCha quarter round.
//!
//! Each export wraps a plain function returning `Result<_, String>` so the
//! logic also runs in native tests, where JS values cannot be built.

use std::collections::BTreeSet;

use rvbir::contracts::{prepare, RiscvContract};
use rvbir::corpus::{self, chacha};
use rvbir::disasm::{parse_objdump, slice};
use rvbir::lifter::lift_slice;
use rvbir::smt::NoSolver;
use rvbir::symbolic::{execute, Heuristics};
use wasm_bindgen::prelude::*;

fn parse_addr(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let r = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    r.map_err(|e| format!("bad address {s:?}: {e}"))
}

/// BIR text of the code from `entry` up to any of the comma separated `ends`.
pub fn lift_text(listing: &str, entry: &str, ends: &str) -> Result<String, String> {
    let unit = parse_objdump(listing).map_err(|e| e.to_string())?;
    let ends = ends
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(parse_addr)
        .collect::<Result<BTreeSet<u64>, _>>()?;
    let sl = slice(&unit, parse_addr(entry)?, &ends).map_err(|e| e.to_string())?;
    let (program, _) = lift_slice(&sl).map_err(|e| e.to_string())?;
    Ok(program.to_string())
}

/// The symbolic structure of a contract's program as JSON. Without a solver
/// no branch is pruned, so a loop with an input-dependent exit exhausts the
/// contract's unrolling bound and is reported as an error.
pub fn symex_json(listing: &str, contract: &str) -> Result<String, String> {
    let rc = RiscvContract::parse(contract).map_err(|e| e.to_string())?;
    let p = prepare(listing, &rc).map_err(|e| e.to_string())?;
    let heuristics = Heuristics {
        unroll: rc.unroll.unwrap_or(0),
        ..Heuristics::default()
    };
    let bc = &p.bir;
    let s = execute(
        &bc.program,
        &NoSolver,
        &heuristics,
        bc.entry,
        &bc.endpoints,
        &bc.forbidden,
        &bc.pre,
    )
    .map_err(|e| e.to_string())?;
    serde_json::to_string_pretty(&s.dump()).map_err(|e| e.to_string())
}

/// One ChaCha quarter round on four words.
pub fn quarter_round(words: [u32; 4]) -> [u32; 4] {
    let (a, b, c, d) = chacha::quarter_round(words[0], words[1], words[2], words[3]);
    [a, b, c, d]
}

/// Listing and contract of a built-in example.
pub fn example_texts(name: &str) -> Result<(String, String), String> {
    let f = corpus::fixture(name).map_err(|e| e.to_string())?;
    Ok((f.listing.to_string(), f.contract.to_string()))
}

#[wasm_bindgen]
pub fn lift(listing: &str, entry: &str, ends: &str) -> Result<String, JsError> {
    lift_text(listing, entry, ends).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn symex(listing: &str, contract: &str) -> Result<String, JsError> {
    symex_json(listing, contract).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = quarterRound)]
pub fn quarter_round_js(a: u32, b: u32, c: u32, d: u32) -> Vec<u32> {
    quarter_round([a, b, c, d]).to_vec()
}

#[wasm_bindgen(js_name = exampleNames)]
pub fn example_names() -> Vec<String> {
    corpus::names().map(String::from).collect()
}

#[wasm_bindgen(js_name = exampleListing)]
pub fn example_listing(name: &str) -> Result<String, JsError> {
    example_texts(name)
        .map(|t| t.0)
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = exampleContract)]
pub fn example_contract(name: &str) -> Result<String, JsError> {
    example_texts(name)
        .map(|t| t.1)
        .map_err(|e| JsError::new(&e))
}
