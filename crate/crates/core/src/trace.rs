//! Text trace files for chains.
//!
//! A chain trace is CSV with a versioned header:
//!
//! ```text
//! # plmix-chain v1 G=2 K=3 N=100
//! # gibbs={"n_iter":22000,...}
//! # prior={"g":2,...}
//! draw,p_1_1,p_1_2,p_1_3,p_2_1,p_2_2,p_2_3,omega_1,omega_2,deviance
//! 1,...
//! ```
//!
//! Supports are written on the sampler's internal scale with full
//! round-trip precision. Labels go to a sidecar file with one row of
//! 1-based labels per draw. A relabeled trace uses the magic
//! `plmix-relabeled` and appends `perm_1..perm_G` (1-based raw component
//! placed at each position).

use std::fmt::Write as _;

use crate::gibbs::{Chain, GibbsConfig};
use crate::model::PLMixtureParams;
use crate::prior::PriorHyper;
use crate::relabel::RelabeledChain;
use crate::{Error, Result};

const CHAIN_MAGIC: &str = "plmix-chain";
const RELABELED_MAGIC: &str = "plmix-relabeled";
const LABELS_MAGIC: &str = "plmix-labels";
const VERSION: &str = "v1";

fn write_trace(chain: &Chain, magic: &str, perms: Option<&[Vec<usize>]>) -> String {
    let (g, k) = (chain.n_components(), chain.n_items());
    let mut out = String::new();
    let _ = writeln!(out, "# {magic} {VERSION} G={g} K={k} N={}", chain.n_units());
    let _ = writeln!(
        out,
        "# gibbs={}",
        serde_json::to_string(chain.config()).expect("config serializes")
    );
    let _ = writeln!(
        out,
        "# prior={}",
        serde_json::to_string(chain.prior()).expect("prior serializes")
    );
    out.push_str("draw");
    for c in 1..=g {
        for i in 1..=k {
            let _ = write!(out, ",p_{c}_{i}");
        }
    }
    for c in 1..=g {
        let _ = write!(out, ",omega_{c}");
    }
    out.push_str(",deviance");
    if perms.is_some() {
        for c in 1..=g {
            let _ = write!(out, ",perm_{c}");
        }
    }
    out.push('\n');
    for (d, theta) in chain.draws().iter().enumerate() {
        let _ = write!(out, "{}", d + 1);
        for x in theta.support_flat().iter().chain(theta.weights()) {
            let _ = write!(out, ",{x}");
        }
        let _ = write!(out, ",{}", chain.deviance()[d]);
        if let Some(perms) = perms {
            for &src in &perms[d] {
                let _ = write!(out, ",{}", src + 1);
            }
        }
        out.push('\n');
    }
    out
}

pub fn chain_trace(chain: &Chain) -> String {
    write_trace(chain, CHAIN_MAGIC, None)
}

pub fn relabeled_trace(chain: &RelabeledChain) -> String {
    write_trace(chain.chain(), RELABELED_MAGIC, Some(chain.permutations()))
}

/// Sidecar with the per-draw labels, when the chain kept them.
pub fn labels_trace(chain: &Chain) -> Option<String> {
    let labels = chain.labels()?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# {LABELS_MAGIC} {VERSION} G={} N={}",
        chain.n_components(),
        chain.n_units()
    );
    for row in labels {
        let line: Vec<String> = row.iter().map(|&l| (l + 1).to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    Some(out)
}

struct Header {
    g: usize,
    k: usize,
    n: usize,
}

fn parse_header(line: &str, magic: &str) -> Result<Header> {
    let mut parts = line
        .strip_prefix('#')
        .ok_or_else(|| Error::Trace("missing trace header".into()))?
        .split_whitespace();
    if parts.next() != Some(magic) {
        return Err(Error::Trace(format!("expected a {magic} file")));
    }
    match parts.next() {
        Some(VERSION) => {}
        other => return Err(Error::Trace(format!("unsupported trace version {other:?}"))),
    }
    let (mut g, mut k, mut n) = (None, None, None);
    for part in parts {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::Trace(format!("bad header field {part:?}")))?;
        let v: usize = value
            .parse()
            .map_err(|_| Error::Trace(format!("bad header value {part:?}")))?;
        match key {
            "G" => g = Some(v),
            "K" => k = Some(v),
            "N" => n = Some(v),
            _ => return Err(Error::Trace(format!("unknown header field {key:?}"))),
        }
    }
    let missing = || Error::Trace("header must give G and N".into());
    Ok(Header {
        g: g.ok_or_else(missing)?,
        k: k.unwrap_or(0),
        n: n.ok_or_else(missing)?,
    })
}

fn json_line<T: serde::de::DeserializeOwned>(line: Option<&str>, key: &str) -> Result<T> {
    let body = line
        .and_then(|l| l.strip_prefix('#'))
        .and_then(|l| l.trim().strip_prefix(key))
        .and_then(|l| l.strip_prefix('='))
        .ok_or_else(|| Error::Trace(format!("missing {key} header line")))?;
    serde_json::from_str(body).map_err(|e| Error::Trace(format!("bad {key} header: {e}")))
}

fn parse_labels(text: &str, g: usize, n: usize) -> Result<Vec<Vec<u8>>> {
    let mut lines = text.lines();
    let header = parse_header(lines.next().unwrap_or_default(), LABELS_MAGIC)?;
    if header.g != g || header.n != n {
        return Err(Error::Trace("label sidecar does not match the trace".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(row, line)| {
            line.split(',')
                .map(|f| match f.trim().parse::<usize>() {
                    Ok(l) if (1..=g).contains(&l) => Ok((l - 1) as u8),
                    _ => Err(Error::Trace(format!("bad label {f:?} in row {}", row + 1))),
                })
                .collect()
        })
        .collect()
}

fn parse_trace(text: &str, labels: Option<&str>, magic: &str) -> Result<(Chain, Option<Vec<Vec<usize>>>)> {
    let with_perms = magic == RELABELED_MAGIC;
    let mut lines = text.lines();
    let header = parse_header(lines.next().unwrap_or_default(), magic)?;
    let config: GibbsConfig = json_line(lines.next(), "gibbs")?;
    let prior: PriorHyper = json_line(lines.next(), "prior")?;
    let (g, k) = (header.g, header.k);
    lines
        .next()
        .ok_or_else(|| Error::Trace("missing column header".into()))?;
    let width = 1 + g * k + g + 1 + if with_perms { g } else { 0 };
    let mut draws = Vec::new();
    let mut deviance = Vec::new();
    let mut perms = Vec::new();
    for (row, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(Error::Trace(format!(
                "row {} has {} fields, expected {width}",
                row + 1,
                fields.len()
            )));
        }
        let num = |f: &str| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| Error::Trace(format!("bad number {f:?} in row {}", row + 1)))
        };
        let support = fields[1..1 + g * k]
            .iter()
            .map(|f| num(f))
            .collect::<Result<Vec<_>>>()?;
        let weights = fields[1 + g * k..1 + g * k + g]
            .iter()
            .map(|f| num(f))
            .collect::<Result<Vec<_>>>()?;
        draws.push(PLMixtureParams::from_flat(k, support, weights)?);
        deviance.push(num(fields[1 + g * k + g])?);
        if with_perms {
            let perm = fields[width - g..]
                .iter()
                .map(|f| match f.trim().parse::<usize>() {
                    Ok(c) if (1..=g).contains(&c) => Ok(c - 1),
                    _ => Err(Error::Trace(format!("bad permutation entry {f:?}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            perms.push(perm);
        }
    }
    let labels = labels.map(|t| parse_labels(t, g, header.n)).transpose()?;
    let chain = Chain::from_parts(header.n, draws, labels, deviance, config, prior)?;
    Ok((chain, with_perms.then_some(perms)))
}

pub fn parse_chain(trace: &str, labels: Option<&str>) -> Result<Chain> {
    Ok(parse_trace(trace, labels, CHAIN_MAGIC)?.0)
}

pub fn parse_relabeled(trace: &str, labels: Option<&str>) -> Result<RelabeledChain> {
    let (chain, perms) = parse_trace(trace, labels, RELABELED_MAGIC)?;
    RelabeledChain::new(chain, perms.unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RankingDataset;
    use crate::gibbs::run_chain;
    use crate::relabel::pivotal_relabel;

    fn small_chain(keep_labels: bool) -> Chain {
        let ds = RankingDataset::parse("1,2\n2\n3,1\n1,3\n2,1\n", Some(3)).unwrap();
        let prior = PriorHyper::default_for(2, 3).unwrap();
        let cfg = GibbsConfig {
            n_iter: 30,
            burn_in: 10,
            thin: 2,
            seed: 4,
            keep_labels,
        };
        run_chain(&ds, 2, &prior, &cfg, None).unwrap()
    }

    #[test]
    fn chain_round_trip_is_exact() {
        let chain = small_chain(true);
        let text = chain_trace(&chain);
        assert!(text.starts_with("# plmix-chain v1 G=2 K=3 N=5\n"));
        let labels = labels_trace(&chain).unwrap();
        let back = parse_chain(&text, Some(&labels)).unwrap();
        assert_eq!(back, chain);
        let without = parse_chain(&text, None).unwrap();
        assert!(without.labels().is_none());
        assert_eq!(without.draws(), chain.draws());
    }

    #[test]
    fn relabeled_round_trip() {
        let chain = small_chain(false);
        let pivot = chain.draws()[0].permuted(&[1, 0]);
        let r = pivotal_relabel(&chain, &pivot).unwrap();
        let back = parse_relabeled(&relabeled_trace(&r), None).unwrap();
        assert_eq!(back, r);
        assert!(labels_trace(&chain).is_none());
    }

    #[test]
    fn rejects_bad_input() {
        let chain = small_chain(true);
        let text = chain_trace(&chain);
        assert!(parse_relabeled(&text, None).is_err());
        assert!(parse_chain(&text.replace(" v1 ", " v9 "), None).is_err());
        let truncated: String = text.lines().take(5).map(|l| format!("{l},\n")).collect();
        assert!(parse_chain(&truncated, None).is_err());
        let labels = labels_trace(&chain).unwrap().replace("G=2", "G=3");
        assert!(parse_chain(&text, Some(&labels)).is_err());
    }
}
