//! Browser demo: inspect and instrument a class file client-side.

use wasm_bindgen::prelude::*;

use weft::analysis::ClassHierarchy;
use weft::cfg::{build_cfg, render_cfg_svg, split_critical_edges, Cfg};
use weft::classfile::opcodes::mnemonic;
use weft::classfile::{emit_class, parse_class, ClassModel, CodeBody};
use weft::joinpoint::{generate_joinpoints, Scope};
use weft::transformers::builtin;
use weft::{run_pipeline, PipelineConfig};

fn parse(bytes: &[u8]) -> Result<ClassModel, String> {
    parse_class(bytes).map_err(|e| e.to_string())
}

fn method_cfg(class: &ClassModel, method: usize, split: bool) -> Result<(Cfg, CodeBody), String> {
    let m = class.methods.get(method).ok_or_else(|| format!("no method #{method}"))?;
    let code = m.code.as_ref().ok_or_else(|| format!("{} has no code", m.name))?;
    let cfg = build_cfg(&m.name, &m.descriptor, code, 0).map_err(|e| e.to_string())?;
    if !split {
        return Ok((cfg, code.clone()));
    }
    let mut next = cfg.blocks.len();
    let s = split_critical_edges(&cfg, code, &mut next).map_err(|e| e.to_string())?;
    Ok((s.cfg, s.code))
}

/// `index name descriptor` for every method, marking those without code.
pub fn methods_of(bytes: &[u8]) -> Result<Vec<String>, String> {
    let class = parse(bytes)?;
    Ok(class
        .methods
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let note = if m.code.is_none() { " (no code)" } else { "" };
            format!("{i} {}{}{note}", m.name, m.descriptor)
        })
        .collect())
}

/// SVG of a method's CFG, optionally with critical edges split.
pub fn cfg_svg(bytes: &[u8], method: usize, split: bool) -> Result<String, String> {
    let class = parse(bytes)?;
    let (cfg, code) = method_cfg(&class, method, split)?;
    Ok(render_cfg_svg(&cfg, &code.insns))
}

/// One line per joinpoint of a method: kind, block index and instruction.
pub fn joinpoints_of(bytes: &[u8], method: usize, branches: bool) -> Result<Vec<String>, String> {
    let class = parse(bytes)?;
    let (cfg, code) = method_cfg(&class, method, branches)?;
    Ok(generate_joinpoints(&cfg, &code, branches)
        .iter()
        .map(|jp| {
            let block = cfg.blocks[jp.block].index;
            match jp.insn.and_then(|i| code.insns[i].opcode()) {
                Some(op) => format!("{} block {block} {}", jp.kind, mnemonic(op)),
                None => format!("{} block {block}", jp.kind),
            }
        })
        .collect())
}

/// Class bytes woven with a built-in transformer, and the run's report.
pub fn weave(bytes: &[u8], transformer: &str, scope: &str) -> Result<(Vec<u8>, String), String> {
    let class = parse(bytes)?;
    let t = builtin(transformer).ok_or_else(|| format!("unknown transformer {transformer}"))?;
    let scope = if scope.trim().is_empty() { Scope::default() } else { Scope::parse(scope) };
    let config = PipelineConfig { scope, ..PipelineConfig::default() };
    let mut hierarchy = ClassHierarchy::new();
    hierarchy.add_class(&class);
    let (woven, report) = run_pipeline(&class, t.as_ref(), &config, &hierarchy).map_err(|e| e.to_string())?;
    let out = emit_class(&woven).map_err(|e| e.to_string())?;
    Ok((out, report.to_string()))
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen(js_name = listMethods)]
pub fn list_methods(bytes: &[u8]) -> Result<Vec<String>, JsError> {
    methods_of(bytes).map_err(js)
}

#[wasm_bindgen(js_name = renderCfg)]
pub fn render_cfg(bytes: &[u8], method: usize, split: bool) -> Result<String, JsError> {
    cfg_svg(bytes, method, split).map_err(js)
}

#[wasm_bindgen(js_name = listJoinpoints)]
pub fn list_joinpoints(bytes: &[u8], method: usize, branches: bool) -> Result<Vec<String>, JsError> {
    joinpoints_of(bytes, method, branches).map_err(js)
}

/// Result of [`instrument`].
#[wasm_bindgen]
pub struct Woven {
    bytes: Vec<u8>,
    report: String,
}

#[wasm_bindgen]
impl Woven {
    #[wasm_bindgen(getter)]
    pub fn bytes(&self) -> Vec<u8> {
        self.bytes.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn report(&self) -> String {
        self.report.clone()
    }
}

#[wasm_bindgen]
pub fn instrument(bytes: &[u8], transformer: &str, scope: &str) -> Result<Woven, JsError> {
    let (bytes, report) = weave(bytes, transformer, scope).map_err(js)?;
    Ok(Woven { bytes, report })
}

#[wasm_bindgen(js_name = transformers)]
pub fn transformer_names() -> Vec<String> {
    weft::transformers::BUILTIN_NAMES.iter().map(|s| s.to_string()).collect()
}
