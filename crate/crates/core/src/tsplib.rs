//! TSPLIB reader, EUC_2D only.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{Instance, Normalization, Point};

#[derive(Debug, Clone)]
pub struct TsplibInstance {
    pub name: String,
    pub n: usize,
    pub raw: Vec<Point>,
    pub instance: Instance,
    pub normalization: Normalization,
    pub optimum: Option<u64>,
}

impl TsplibInstance {
    /// Tour length with TSPLIB's EUC_2D rule: each edge is the Euclidean
    /// distance between raw coordinates rounded to the nearest integer.
    pub fn rounded_length(&self, order: &[usize]) -> Result<u64> {
        rounded_tour_length(&self.raw, order)
    }
}

pub fn nint_distance(a: &Point, b: &Point) -> u64 {
    (a.dist(b) + 0.5).floor() as u64
}

pub fn rounded_tour_length(raw: &[Point], order: &[usize]) -> Result<u64> {
    crate::solvers::check_permutation(raw.len(), order)?;
    let n = order.len();
    Ok((0..n).map(|k| nint_distance(&raw[order[k]], &raw[order[(k + 1) % n]])).sum())
}

pub fn parse_tsplib(text: &str) -> Result<TsplibInstance> {
    let mut name = String::new();
    let mut dimension: Option<(usize, usize)> = None;
    let mut weight_type: Option<(String, usize)> = None;
    let mut coords: Vec<(usize, Point)> = Vec::new();
    let mut in_coords = false;
    let mut saw_section = false;
    let mut last_line = 0;

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "EOF" {
            break;
        }
        if in_coords {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() == 3 {
                if let (Ok(id), Ok(x), Ok(y)) = (fields[0].parse::<usize>(), fields[1].parse::<f64>(), fields[2].parse::<f64>()) {
                    if !(x.is_finite() && y.is_finite()) {
                        return Err(Error::parse(lineno, "non-finite coordinate"));
                    }
                    coords.push((id, Point::new(x, y)));
                    continue;
                }
                return Err(Error::parse(lineno, format!("malformed coordinate line `{line}`")));
            }
            if fields.len() > 1 && fields.iter().skip(1).all(|f| f.parse::<f64>().is_ok()) {
                return Err(Error::parse(lineno, format!("malformed coordinate line `{line}`")));
            }
            in_coords = false;
        }
        if line.starts_with("NODE_COORD_SECTION") {
            if weight_type.is_none() {
                return Err(Error::parse(lineno, "NODE_COORD_SECTION before EDGE_WEIGHT_TYPE"));
            }
            in_coords = true;
            saw_section = true;
            continue;
        }
        let (key, value) = match line.split_once(':') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => (line.split_whitespace().next().unwrap_or(""), ""),
        };
        match key {
            "NAME" => name = value.to_string(),
            "TYPE" => {
                if value != "TSP" {
                    return Err(Error::parse(lineno, format!("unsupported problem type `{value}`")));
                }
            }
            "DIMENSION" => {
                let d = value
                    .parse()
                    .map_err(|_| Error::parse(lineno, format!("bad DIMENSION `{value}`")))?;
                dimension = Some((d, lineno));
            }
            "EDGE_WEIGHT_TYPE" => {
                if value != "EUC_2D" {
                    return Err(Error::parse(lineno, format!("unsupported EDGE_WEIGHT_TYPE `{value}`")));
                }
                weight_type = Some((value.to_string(), lineno));
            }
            "COMMENT" | "" => {}
            k if k.ends_with("_SECTION") => {
                return Err(Error::parse(lineno, format!("unsupported section `{k}`")));
            }
            _ => {}
        }
    }

    let end = last_line.max(1);
    let (dim, dim_line) = dimension.ok_or_else(|| Error::parse(end, "missing DIMENSION"))?;
    if weight_type.is_none() {
        return Err(Error::parse(end, "missing EDGE_WEIGHT_TYPE"));
    }
    if !saw_section {
        return Err(Error::parse(end, "missing NODE_COORD_SECTION"));
    }
    if coords.len() != dim {
        return Err(Error::parse(
            dim_line,
            format!("DIMENSION is {dim} but {} coordinates were read", coords.len()),
        ));
    }
    if dim > 10_000 {
        return Err(Error::Capacity(format!("{dim} nodes exceeds the 10000-node limit")));
    }
    // node ids are 1-based; keep file order but require each id exactly once
    let mut seen = vec![false; dim];
    for &(id, _) in &coords {
        if id == 0 || id > dim || std::mem::replace(&mut seen[id - 1], true) {
            return Err(Error::parse(end, format!("node id {id} is out of range or repeated")));
        }
    }
    coords.sort_by_key(|&(id, _)| id);
    let raw: Vec<Point> = coords.into_iter().map(|(_, p)| p).collect();
    let (instance, normalization) = Instance::from_raw(&raw)?;
    Ok(TsplibInstance {
        name,
        n: dim,
        raw,
        instance,
        normalization,
        optimum: None,
    })
}

/// Parses `name : length` lines; `#` starts a comment.
pub fn parse_optima(text: &str) -> Result<BTreeMap<String, u64>> {
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (name, value) = line
            .split_once(':')
            .ok_or_else(|| Error::parse(idx + 1, "expected `name : length`"))?;
        let v = value
            .trim()
            .parse()
            .map_err(|_| Error::parse(idx + 1, format!("bad optimum `{}`", value.trim())))?;
        out.insert(name.trim().to_string(), v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "NAME : tiny\nTYPE : TSP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n1 0 0\n2 3 0\n3 3 4\nEOF\n";

    #[test]
    fn minimal_file() {
        let t = parse_tsplib(TINY).unwrap();
        assert_eq!(t.n, 3);
        assert_eq!(t.instance.len(), 3);
        assert_eq!(t.name, "tiny");
        assert_eq!(t.raw[2], Point::new(3.0, 4.0));
        assert_eq!(t.rounded_length(&[0, 1, 2]).unwrap(), 12);
    }

    #[test]
    fn rejects_explicit() {
        let text = "NAME : x\nTYPE : TSP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EXPLICIT\nEDGE_WEIGHT_SECTION\n1 2 3\nEOF\n";
        match parse_tsplib(text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 4);
                assert!(message.contains("EXPLICIT"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch() {
        let text = TINY.replace("DIMENSION : 3", "DIMENSION : 4");
        assert!(matches!(parse_tsplib(&text), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn missing_section() {
        let text = "NAME : x\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\nEOF\n";
        assert!(matches!(parse_tsplib(text), Err(Error::Parse { .. })));
    }

    #[test]
    fn malformed_coordinate() {
        let text = TINY.replace("2 3 0", "2 3 zero");
        assert!(matches!(parse_tsplib(&text), Err(Error::Parse { line: 7, .. })));
    }

    #[test]
    fn nint_rounding() {
        assert_eq!(nint_distance(&Point::new(0.0, 0.0), &Point::new(0.5, 0.0)), 1);
        assert_eq!(nint_distance(&Point::new(0.0, 0.0), &Point::new(0.49, 0.0)), 0);
    }

    #[test]
    fn optima_file() {
        let m = parse_optima("# known\nberlin52 : 7542\n\neil51: 426\n").unwrap();
        assert_eq!(m["berlin52"], 7542);
        assert_eq!(m["eil51"], 426);
        assert!(parse_optima("nonsense").is_err());
    }
}
