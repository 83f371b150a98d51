//! Text codebook files.
//!
//! A built product quantizer is stored as one self-describing UTF-8 document:
//! a versioned header of `key value` lines, then one section per block with
//! its codewords and cell probabilities, then `end`. Floats are written with
//! 17 significant digits, so parsing reproduces every f64 bit-exactly and the
//! files stay diff-able. Lines starting with `#` are comments; the CLI puts
//! its resolved run configuration there.

use crate::error::FunqError;
use crate::process::EigenModel;
use crate::product::{BlockCodebook, ProductQuantizer, QuantizerBlock};
use crate::scalar::Codebook1D;
use crate::vector::{CodebookD, Quality, TrainMeta};
use crate::Result;
use std::sync::Arc;

const MAGIC: &str = "funq-codebook v1";

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serialize a product quantizer, with optional `# key value` comment lines
/// after the magic line.
pub fn write_product_quantizer(pq: &ProductQuantizer, comments: &[(String, String)]) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    for (k, v) in comments {
        out.push_str(&format!("# {k} {v}\n"));
    }
    out.push_str(&format!("model {}\n", pq.model().descriptor()));
    out.push_str(&format!("n {}\n", pq.budget()));
    match pq.theta() {
        Some(t) => out.push_str(&format!("theta {}\n", fmt(t))),
        None => out.push_str("theta -\n"),
    }
    out.push_str(&format!("quality {}\n", pq.quality()));
    out.push_str(&format!("seed {}\n", pq.seed()));
    out.push_str(&format!("m {}\n", pq.m()));
    out.push_str(&format!(
        "analytic_distortion {}\n",
        fmt(pq.analytic_distortion())
    ));
    match pq.exact_decomposition() {
        Some(v) => out.push_str(&format!("exact_decomposition {}\n", fmt(v))),
        None => out.push_str("exact_decomposition -\n"),
    }
    for (j, block) in pq.blocks().iter().enumerate() {
        match &block.codebook {
            BlockCodebook::Scalar(cb) => {
                out.push_str(&format!(
                    "block {} dim 1 size {} distortion {}\n",
                    j + 1,
                    cb.n(),
                    fmt(cb.distortion())
                ));
                for (i, (a, p)) in cb.points().iter().zip(cb.probs()).enumerate() {
                    out.push_str(&format!("point {} {} {}\n", i + 1, fmt(*a), fmt(*p)));
                }
            }
            BlockCodebook::Multi(cb) => {
                let meta = cb.meta();
                out.push_str(&format!(
                    "block {} dim {} size {} distortion {} stderr {} steps {} gain_a {} gain_b {} seed {} lloyd_rounds {}\n",
                    j + 1,
                    cb.d(),
                    cb.n(),
                    fmt(cb.distortion()),
                    fmt(cb.stderr()),
                    meta.steps,
                    fmt(meta.gain_a),
                    fmt(meta.gain_b),
                    meta.seed,
                    meta.lloyd_rounds
                ));
                for i in 0..cb.n() {
                    let coords: Vec<String> = cb.point(i).iter().map(|&c| fmt(c)).collect();
                    out.push_str(&format!(
                        "point {} {} {}\n",
                        i + 1,
                        coords.join(" "),
                        fmt(cb.probs()[i])
                    ));
                }
            }
        }
    }
    out.push_str("end\n");
    out
}

struct LineParser<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> LineParser<'a> {
    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        for (idx, line) in self.lines.by_ref() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            return Some((idx + 1, trimmed));
        }
        None
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> FunqError {
    FunqError::Parse {
        location: format!("line {line}"),
        message: message.into(),
    }
}

fn field<'a>(line: usize, rest: &'a str, key: &str) -> Result<&'a str> {
    rest.strip_prefix(key)
        .map(str::trim)
        .ok_or_else(|| parse_err(line, format!("expected '{key} ...', got '{rest}'")))
}

fn parse_f64(line: usize, tok: &str) -> Result<f64> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("invalid float '{tok}'")))
}

fn parse_u64(line: usize, tok: &str) -> Result<u64> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("invalid integer '{tok}'")))
}

/// Parse a codebook document back into a product quantizer. The analytic
/// distortion is revalidated against the stored blocks.
pub fn read_product_quantizer(text: &str) -> Result<ProductQuantizer> {
    let mut parser = LineParser {
        lines: text.lines().enumerate(),
    };
    let (line, magic) = parser
        .next_content()
        .ok_or_else(|| parse_err(0, "empty document"))?;
    if magic != MAGIC {
        return Err(parse_err(line, format!("bad magic '{magic}'")));
    }
    let mut model = None;
    let mut n = None;
    let mut theta = None;
    let mut quality = Quality::Standard;
    let mut seed = 0u64;
    let mut m = None;
    let mut analytic = None;
    let mut exact = None;

    // header
    let mut pending: Option<(usize, String)> = None;
    while let Some((line, content)) = parser.next_content() {
        let (key, value) = content
            .split_once(' ')
            .ok_or_else(|| parse_err(line, format!("expected 'key value', got '{content}'")))?;
        match key {
            "model" => model = Some(EigenModel::parse(value)?),
            "n" => n = Some(parse_u64(line, value)?),
            "theta" => theta = (value != "-").then(|| parse_f64(line, value)).transpose()?,
            "quality" => quality = Quality::parse(value)?,
            "seed" => seed = parse_u64(line, value)?,
            "m" => m = Some(parse_u64(line, value)? as usize),
            "analytic_distortion" => analytic = Some(parse_f64(line, value)?),
            "exact_decomposition" => {
                exact = (value != "-").then(|| parse_f64(line, value)).transpose()?
            }
            "block" => {
                pending = Some((line, content.to_string()));
                break;
            }
            other => return Err(parse_err(line, format!("unknown header key '{other}'"))),
        }
    }
    let model = model.ok_or_else(|| parse_err(0, "missing model"))?;
    let n = n.ok_or_else(|| parse_err(0, "missing n"))?;
    let m = m.ok_or_else(|| parse_err(0, "missing m"))?;
    let analytic = analytic.ok_or_else(|| parse_err(0, "missing analytic_distortion"))?;

    // blocks
    let mut blocks: Vec<QuantizerBlock> = Vec::with_capacity(m);
    let mut offset = 0usize;
    let mut saw_end = false;
    while let Some((line, content)) = pending
        .take()
        .or_else(|| parser.next_content().map(|(l, c)| (l, c.to_string())))
    {
        if content == "end" {
            saw_end = true;
            break;
        }
        let rest = field(line, &content, "block")?;
        let tokens: Vec<&str> = rest.split_whitespace().collect();
        let mut kv = std::collections::HashMap::new();
        // block <j> key value key value ...
        if tokens.len() % 2 != 1 {
            return Err(parse_err(line, "malformed block header"));
        }
        for pair in tokens[1..].chunks(2) {
            kv.insert(pair[0], pair[1]);
        }
        let need = |key: &str| {
            kv.get(key)
                .copied()
                .ok_or_else(|| parse_err(line, format!("block header missing '{key}'")))
        };
        let dim = parse_u64(line, need("dim")?)? as usize;
        let size = parse_u64(line, need("size")?)? as usize;
        let distortion = parse_f64(line, need("distortion")?)?;

        let mut points = Vec::with_capacity(size * dim);
        let mut probs = Vec::with_capacity(size);
        for i in 0..size {
            let (pline, pcontent) = parser
                .next_content()
                .ok_or_else(|| parse_err(line, "unexpected end of document in block"))?;
            let rest = field(pline, pcontent, "point")?;
            let toks: Vec<&str> = rest.split_whitespace().collect();
            if toks.len() != dim + 2 {
                return Err(parse_err(
                    pline,
                    format!("expected index, {dim} coordinates and probability"),
                ));
            }
            let idx = parse_u64(pline, toks[0])? as usize;
            if idx != i + 1 {
                return Err(parse_err(
                    pline,
                    format!("point index {idx}, expected {}", i + 1),
                ));
            }
            for tok in &toks[1..=dim] {
                points.push(parse_f64(pline, tok)?);
            }
            probs.push(parse_f64(pline, toks[dim + 1])?);
        }
        let codebook = if dim == 1 {
            BlockCodebook::Scalar(Arc::new(Codebook1D::from_parts(points, probs, distortion)?))
        } else {
            let meta = TrainMeta {
                steps: parse_u64(line, kv.get("steps").copied().unwrap_or("0"))?,
                gain_a: parse_f64(line, kv.get("gain_a").copied().unwrap_or("0"))?,
                gain_b: parse_f64(line, kv.get("gain_b").copied().unwrap_or("0"))?,
                seed: parse_u64(line, kv.get("seed").copied().unwrap_or("0"))?,
                lloyd_rounds: parse_u64(line, kv.get("lloyd_rounds").copied().unwrap_or("0"))?
                    as u32,
            };
            let stderr = parse_f64(line, kv.get("stderr").copied().unwrap_or("0"))?;
            BlockCodebook::Multi(CodebookD::from_parts(
                dim, points, probs, distortion, stderr, meta,
            )?)
        };
        blocks.push(QuantizerBlock { offset, codebook });
        offset += dim;
    }
    if !saw_end {
        return Err(parse_err(0, "missing 'end' marker"));
    }
    if blocks.len() != m {
        return Err(parse_err(
            0,
            format!("header claims {m} blocks, found {}", blocks.len()),
        ));
    }
    ProductQuantizer::from_parts(model, n, theta, quality, seed, blocks, analytic, exact)
}

/// Write a codebook file to disk.
pub fn save(
    pq: &ProductQuantizer,
    path: &std::path::Path,
    comments: &[(String, String)],
) -> Result<()> {
    std::fs::write(path, write_product_quantizer(pq, comments))?;
    Ok(())
}

/// Load a codebook file from disk.
pub fn load(path: &std::path::Path) -> Result<ProductQuantizer> {
    let text = std::fs::read_to_string(path)?;
    read_product_quantizer(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::product::{build, build_rl32};

    fn round_trip(pq: &ProductQuantizer) -> ProductQuantizer {
        let text = write_product_quantizer(pq, &[("written-by".into(), "tests".into())]);
        read_product_quantizer(&text).unwrap()
    }

    #[test]
    fn scalar_build_round_trips_bit_exactly() {
        let pq = build(
            &EigenModel::brownian(),
            10,
            0.5,
            Some(1),
            Quality::Quick,
            11,
        )
        .unwrap();
        let back = round_trip(&pq);
        assert_eq!(
            back.analytic_distortion().to_bits(),
            pq.analytic_distortion().to_bits()
        );
        assert_eq!(back.m(), pq.m());
        assert_eq!(back.budget(), pq.budget());
        for (a, b) in back.blocks().iter().zip(pq.blocks()) {
            assert_eq!(a.offset, b.offset);
            match (&a.codebook, &b.codebook) {
                (BlockCodebook::Scalar(x), BlockCodebook::Scalar(y)) => {
                    for (p, q) in x.points().iter().zip(y.points()) {
                        assert_eq!(p.to_bits(), q.to_bits());
                    }
                    for (p, q) in x.probs().iter().zip(y.probs()) {
                        assert_eq!(p.to_bits(), q.to_bits());
                    }
                }
                _ => panic!("block kind changed"),
            }
        }
    }

    #[test]
    fn multi_block_round_trips() {
        let pq = build(&EigenModel::brownian(), 64, 0.5, Some(2), Quality::Quick, 3).unwrap();
        let back = round_trip(&pq);
        assert_eq!(
            back.analytic_distortion().to_bits(),
            pq.analytic_distortion().to_bits()
        );
        assert_eq!(
            back.exact_decomposition().map(f64::to_bits),
            pq.exact_decomposition().map(f64::to_bits)
        );
        assert_eq!(back.block_length(), Some(2));
    }

    #[test]
    fn rl32_round_trips() {
        let pq = build_rl32(12, Quality::Quick, 7).unwrap();
        let back = round_trip(&pq);
        assert_eq!(
            back.analytic_distortion().to_bits(),
            pq.analytic_distortion().to_bits()
        );
        assert_eq!(back.model(), pq.model());
    }

    #[test]
    fn explicit_model_round_trips() {
        let model = EigenModel::explicit(vec![1.0, 0.25], Some(2.0)).unwrap();
        let pq = build(&model, 8, 0.5, Some(1), Quality::Quick, 5).unwrap();
        let back = round_trip(&pq);
        assert_eq!(back.model(), pq.model());
    }

    #[test]
    fn parse_errors_name_the_line() {
        let pq = build(&EigenModel::brownian(), 4, 0.5, Some(1), Quality::Quick, 1).unwrap();
        let text = write_product_quantizer(&pq, &[]);
        // corrupt a point line
        let bad: String = text
            .lines()
            .map(|l| {
                if l.starts_with("point 2") {
                    "point 2 not-a-number 0.5".to_string()
                } else {
                    l.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join("\n");
        let err = read_product_quantizer(&bad).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
        assert!(err.contains("invalid float"), "{err}");
        // tampered distortion is rejected by the consistency check
        let tampered: String = text
            .lines()
            .map(|l| {
                if l.starts_with("analytic_distortion") {
                    "analytic_distortion 1.0e0".to_string()
                } else {
                    l.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join("\n");
        let err = read_product_quantizer(&tampered).unwrap_err().to_string();
        assert!(err.contains("disagrees"), "{err}");
    }

    #[test]
    fn rejects_bad_magic() {
        assert!(read_product_quantizer("something else\n").is_err());
        assert!(read_product_quantizer("").is_err());
    }
}
