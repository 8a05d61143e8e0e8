//! Render per-token weight distributions as blue-shaded heatmaps, either
//! with ANSI escapes for terminals or as self-contained HTML.

use crate::error::{Error, Result};

/// Check the (tokens, weights) contract shared by both renderers: equal
/// nonzero lengths, finite non-negative weights summing to 1.
fn validate(tokens: &[String], weights: &[f64]) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput("heatmap over an empty document".into()));
    }
    if tokens.len() != weights.len() {
        return Err(Error::InvalidArg(format!(
            "length mismatch: {} tokens vs {} weights",
            tokens.len(),
            weights.len()
        )));
    }
    for &w in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidArg(format!("weights must be finite and >= 0, got {w}")));
        }
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArg(format!("weights must sum to 1, got {sum}")));
    }
    Ok(())
}

/// Quantile bucket (0..=4) per weight: bucket = floor(rank * 5 / n) where
/// rank counts strictly smaller weights. Monotone in the weight, and ties
/// share a bucket, so uniform weights all land in bucket 0.
pub fn quantile_buckets(weights: &[f64]) -> Vec<usize> {
    let n = weights.len();
    weights
        .iter()
        .map(|&w| {
            let rank = weights.iter().filter(|&&v| v < w).count();
            rank * 5 / n
        })
        .collect()
}

/// Background RGB per bucket; bucket 0 means "no shading".
const SHADES: [(u8, u8, u8); 5] =
    [(0, 0, 0), (219, 234, 254), (147, 197, 253), (59, 130, 246), (29, 78, 216)];

/// ANSI-shaded line: each token's background is its bucket's blue shade.
pub fn render_terminal(tokens: &[String], weights: &[f64]) -> Result<String> {
    validate(tokens, weights)?;
    let buckets = quantile_buckets(weights);
    let mut out = String::new();
    for (i, (tok, &b)) in tokens.iter().zip(&buckets).enumerate() {
        if i > 0 {
            out.push(' ');
        }
        if b == 0 {
            out.push_str(tok);
        } else {
            let (r, g, bl) = SHADES[b];
            // Dark shades get white text for contrast.
            let fg = if b >= 3 { "38;2;255;255;255" } else { "38;2;0;0;0" };
            out.push_str(&format!("\x1b[48;2;{r};{g};{bl}m\x1b[{fg}m{tok}\x1b[0m"));
        }
    }
    out.push('\n');
    Ok(out)
}

/// Escape the HTML-significant characters of a token.
pub fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

/// Self-contained HTML fragment: one span per token, background opacity
/// proportional to weight / max(weight).
pub fn render_html(tokens: &[String], weights: &[f64]) -> Result<String> {
    validate(tokens, weights)?;
    let max = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = String::from("<div class=\"heatmap\" style=\"font-family: monospace; line-height: 1.8;\">\n");
    for (tok, &w) in tokens.iter().zip(weights) {
        let alpha = if max > 0.0 { w / max } else { 0.0 };
        out.push_str(&format!(
            "<span style=\"background-color: rgba(29,78,216,{alpha:.4});\">{}</span>\n",
            escape_html(tok)
        ));
    }
    out.push_str("</div>\n");
    Ok(out)
}
