//! Self-contained HTML/SVG rendering of CFGs.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{Cfg, EdgeKind};
use crate::classfile::Insn;

const CHAR_W: f64 = 7.2;
const LINE_H: f64 = 15.0;
const PAD: f64 = 8.0;
const GAP_X: f64 = 40.0;
const GAP_Y: f64 = 60.0;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '&' => out.push_str("&amp;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

/// 64-bit FNV-1a.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// `<class>.<method>.<descriptor-hash>.html`, safe for any file system.
pub fn cfg_file_name(class: &str, method: &str, descriptor: &str) -> String {
    let clean = |s: &str| -> String {
        s.chars()
            .map(|c| match c {
                '/' | '\\' => '.',
                '<' | '>' | ':' | '"' | '|' | '?' | '*' => '_',
                c => c,
            })
            .collect()
    };
    format!("{}.{}.{:016x}.html", clean(class), clean(method), fnv1a(descriptor))
}

/// Longest-path layering over the graph with back edges removed.
fn ranks(cfg: &Cfg) -> Vec<usize> {
    let n = cfg.blocks.len();
    let mut state = vec![0u8; n];
    let mut back = std::collections::HashSet::new();
    let mut stack = vec![(cfg.entry, 0usize)];
    state[cfg.entry] = 1;
    while let Some((u, i)) = stack.pop() {
        let succ = &cfg.blocks[u].successors;
        if i < succ.len() {
            stack.push((u, i + 1));
            let v = succ[i].0;
            match state[v] {
                0 => {
                    state[v] = 1;
                    stack.push((v, 0));
                }
                1 => {
                    back.insert((u, i));
                }
                _ => {}
            }
        } else {
            state[u] = 2;
        }
    }
    let mut indeg = vec![0usize; n];
    for (u, b) in cfg.blocks.iter().enumerate() {
        for (i, (v, _)) in b.successors.iter().enumerate() {
            if !back.contains(&(u, i)) && state[u] == 2 {
                indeg[*v] += 1;
            }
        }
    }
    let mut rank = vec![0usize; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    while let Some(u) = queue.pop_front() {
        if state[u] != 2 {
            continue;
        }
        for (i, (v, _)) in cfg.blocks[u].successors.iter().enumerate() {
            if back.contains(&(u, i)) {
                continue;
            }
            rank[*v] = rank[*v].max(rank[u] + 1);
            indeg[*v] -= 1;
            if indeg[*v] == 0 {
                queue.push_back(*v);
            }
        }
    }
    let max = rank.iter().copied().max().unwrap_or(0);
    for v in 0..n {
        if state[v] == 0 {
            rank[v] = max + 1;
        }
    }
    rank
}

/// An inline SVG drawing of one CFG.
pub fn render_cfg_svg(cfg: &Cfg, insns: &[Insn]) -> String {
    let rank = ranks(cfg);
    let layers = rank.iter().copied().max().map_or(0, |m| m + 1);
    let lines: Vec<Vec<String>> = cfg
        .blocks
        .iter()
        .map(|b| {
            let mut l = vec![format!("{} [{}]{}", b.id, b.block_type, if b.synthetic { " synthetic" } else { "" })];
            l.extend((b.first_real..=b.last_real).filter(|&i| insns[i].is_real()).map(|i| insns[i].display()));
            l
        })
        .collect();
    let size: Vec<(f64, f64)> = lines
        .iter()
        .map(|l| {
            let w = l.iter().map(|s| s.chars().count()).max().unwrap_or(0) as f64 * CHAR_W + 2.0 * PAD;
            (w, l.len() as f64 * LINE_H + 2.0 * PAD)
        })
        .collect();

    let mut pos = vec![(0.0, 0.0); cfg.blocks.len()];
    let mut y = PAD;
    let mut width: f64 = 0.0;
    for r in 0..layers {
        let mut x = PAD;
        let mut h: f64 = 0.0;
        for (k, _) in rank.iter().enumerate().filter(|(_, &rk)| rk == r) {
            pos[k] = (x, y);
            x += size[k].0 + GAP_X;
            h = h.max(size[k].1);
        }
        width = width.max(x);
        y += h + GAP_Y;
    }

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" class="cfg" width="{:.0}" height="{:.0}" font-family="monospace" font-size="12">"#,
        width,
        y
    );
    svg.push_str(r##"<defs><marker id="arrow" viewBox="0 0 10 10" refX="10" refY="5" markerWidth="6" markerHeight="6" orient="auto-start-reverse"><path d="M 0 0 L 10 5 L 0 10 z"/></marker></defs>"##);
    for e in &cfg.edges {
        let (fx, fy) = pos[e.from];
        let (tx, ty) = pos[e.to];
        let (x1, y1) = (fx + size[e.from].0 / 2.0, fy + size[e.from].1);
        let (x2, y2) = (tx + size[e.to].0 / 2.0, ty);
        let dash = if e.kind == EdgeKind::HandlerEntry { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = write!(
            svg,
            r#"<g class="edge" data-from="{}" data-to="{}"><line x1="{x1:.1}" y1="{y1:.1}" x2="{x2:.1}" y2="{y2:.1}" stroke="black"{dash} marker-end="url(#arrow)"/>"#,
            escape(&cfg.blocks[e.from].id),
            escape(&cfg.blocks[e.to].id),
        );
        let label = e.kind.label();
        if !label.is_empty() {
            let _ = write!(
                svg,
                r##"<text class="edge-label" x="{:.1}" y="{:.1}" fill="#a33">{}</text>"##,
                (x1 + x2) / 2.0 + 4.0,
                (y1 + y2) / 2.0,
                escape(&label)
            );
        }
        svg.push_str("</g>");
    }
    for (k, b) in cfg.blocks.iter().enumerate() {
        let (x, y) = pos[k];
        let fill = if b.synthetic { "#fff3cd" } else { "#eef4ff" };
        let _ = write!(
            svg,
            r##"<g class="block" data-id="{}"><rect x="{x:.1}" y="{y:.1}" width="{:.1}" height="{:.1}" rx="4" fill="{fill}" stroke="#335"/>"##,
            escape(&b.id),
            size[k].0,
            size[k].1
        );
        for (i, line) in lines[k].iter().enumerate() {
            let weight = if i == 0 { r#" font-weight="bold""# } else { "" };
            let _ = write!(
                svg,
                r#"<text x="{:.1}" y="{:.1}"{weight}>{}</text>"#,
                x + PAD,
                y + PAD + (i as f64 + 0.8) * LINE_H,
                escape(line)
            );
        }
        svg.push_str("</g>");
    }
    svg.push_str("</svg>");
    svg
}

/// A complete HTML document with the CFG before and, when given, after
/// instrumentation, side by side.
pub fn render_cfg_html(
    class: &str,
    before: (&Cfg, &[Insn]),
    after: Option<(&Cfg, &[Insn])>,
) -> String {
    let title = format!("{}.{}{}", class.replace('/', "."), before.0.method_name, before.0.descriptor);
    let mut html = String::new();
    let _ = write!(
        html,
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{t}</title>\
         <style>body{{font-family:sans-serif}}.graphs{{display:flex;gap:2em;align-items:flex-start}}\
         figure{{margin:0;overflow:auto}}</style></head><body><h1>{t}</h1><div class=\"graphs\">",
        t = escape(&title)
    );
    let mut figure = |caption: &str, (cfg, insns): (&Cfg, &[Insn])| {
        let _ = write!(
            html,
            "<figure class=\"graph\"><figcaption>{caption}</figcaption>{}</figure>",
            render_cfg_svg(cfg, insns)
        );
    };
    figure(if after.is_some() { "Before" } else { "CFG" }, before);
    if let Some(a) = after {
        figure("After", a);
    }
    html.push_str("</div></body></html>\n");
    html
}

/// Writes [`render_cfg_html`] output into `dir` and returns the file path.
pub fn write_cfg_html(
    dir: &Path,
    class: &str,
    before: (&Cfg, &[Insn]),
    after: Option<(&Cfg, &[Insn])>,
) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(cfg_file_name(class, &before.0.method_name, &before.0.descriptor));
    std::fs::write(&path, render_cfg_html(class, before, after))?;
    Ok(path)
}
