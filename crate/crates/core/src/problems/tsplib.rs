//! TSPLIB reader for EUC_2D instances and optimal-tour files.

use std::path::Path;

use super::{DistanceKind, Point, ProblemError, TspInstance};

struct Header {
    name: Option<String>,
    dimension: Option<usize>,
    edge_weight_type: Option<String>,
}

fn split_key(line: &str) -> Option<(String, String)> {
    let (k, v) = line.split_once(':')?;
    Some((k.trim().to_ascii_uppercase(), v.trim().to_string()))
}

fn parse_err(line: usize, msg: impl Into<String>) -> ProblemError {
    ProblemError::Parse { line, msg: msg.into() }
}

/// Parses a TSPLIB `.tsp` file. Only `EDGE_WEIGHT_TYPE: EUC_2D` is accepted.
pub fn parse_tsplib(text: &str) -> Result<TspInstance, ProblemError> {
    let mut header = Header {
        name: None,
        dimension: None,
        edge_weight_type: None,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut coords: Vec<Option<Point>> = Vec::new();
    let mut saw_section = false;
    while let Some((no, line)) = lines.next() {
        if line.is_empty() {
            continue;
        }
        if line == "EOF" {
            break;
        }
        if line.starts_with("NODE_COORD_SECTION") {
            match header.edge_weight_type.as_deref() {
                Some("EUC_2D") => {}
                Some(other) => return Err(ProblemError::Unsupported(format!("EDGE_WEIGHT_TYPE {other}"))),
                None => return Err(parse_err(no, "EDGE_WEIGHT_TYPE missing before NODE_COORD_SECTION")),
            }
            let n = header
                .dimension
                .ok_or_else(|| parse_err(no, "DIMENSION missing before NODE_COORD_SECTION"))?;
            coords = vec![None; n];
            saw_section = true;
            for _ in 0..n {
                let (no, line) = lines
                    .next()
                    .ok_or_else(|| parse_err(no, "unexpected end of NODE_COORD_SECTION"))?;
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() != 3 {
                    return Err(parse_err(no, format!("expected `id x y`, got `{line}`")));
                }
                let id: usize = fields[0].parse().map_err(|_| parse_err(no, "bad node id"))?;
                let x: f64 = fields[1].parse().map_err(|_| parse_err(no, "bad x coordinate"))?;
                let y: f64 = fields[2].parse().map_err(|_| parse_err(no, "bad y coordinate"))?;
                if id == 0 || id > n {
                    return Err(parse_err(no, format!("node id {id} outside 1..={n}")));
                }
                if coords[id - 1].replace(Point::new(x, y)).is_some() {
                    return Err(parse_err(no, format!("node {id} listed twice")));
                }
            }
            continue;
        }
        if line.ends_with("_SECTION") {
            // other sections (display data, tours) are not needed
            let ty = header.edge_weight_type.as_deref().unwrap_or("");
            if line.starts_with("EDGE_WEIGHT_SECTION") {
                return Err(ProblemError::Unsupported(format!("EDGE_WEIGHT_TYPE {ty}")));
            }
            break;
        }
        let Some((key, value)) = split_key(line) else {
            return Err(parse_err(no, format!("unrecognized line `{line}`")));
        };
        match key.as_str() {
            "NAME" => header.name = Some(value),
            "TYPE" if value != "TSP" => {
                return Err(ProblemError::Unsupported(format!("TYPE {value}")));
            }
            "DIMENSION" => {
                header.dimension = Some(value.parse().map_err(|_| parse_err(no, "bad DIMENSION"))?);
            }
            "EDGE_WEIGHT_TYPE" => {
                if value != "EUC_2D" {
                    return Err(ProblemError::Unsupported(format!("EDGE_WEIGHT_TYPE {value}")));
                }
                header.edge_weight_type = Some(value);
            }
            _ => {}
        }
    }
    if !saw_section {
        return Err(parse_err(0, "NODE_COORD_SECTION missing"));
    }
    let coords = coords
        .into_iter()
        .enumerate()
        .map(|(i, p)| p.ok_or_else(|| parse_err(0, format!("node {} has no coordinates", i + 1))))
        .collect::<Result<Vec<_>, _>>()?;
    let inst = TspInstance {
        name: header.name,
        coords,
        distance: DistanceKind::Euc2d,
        reference_optimum: None,
    };
    inst.validate()?;
    Ok(inst)
}

/// Parses a TSPLIB `.tour` file into a 0-based node sequence.
pub fn parse_tour(text: &str) -> Result<Vec<usize>, ProblemError> {
    let mut dimension: Option<usize> = None;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    while let Some((no, line)) = lines.next() {
        if line.starts_with("TOUR_SECTION") {
            let mut tour = Vec::new();
            'outer: for (no, line) in lines.by_ref() {
                for tok in line.split_whitespace() {
                    let v: i64 = tok.parse().map_err(|_| parse_err(no, format!("bad tour entry `{tok}`")))?;
                    if v == -1 {
                        break 'outer;
                    }
                    if v < 1 {
                        return Err(parse_err(no, format!("tour node {v} < 1")));
                    }
                    tour.push(v as usize - 1);
                }
                if line == "EOF" {
                    break;
                }
            }
            if let Some(n) = dimension {
                if tour.len() != n {
                    return Err(parse_err(no, format!("tour has {} nodes, DIMENSION {n}", tour.len())));
                }
            }
            return Ok(tour);
        }
        if let Some((k, v)) = split_key(line) {
            if k == "DIMENSION" {
                dimension = Some(v.parse().map_err(|_| parse_err(no, "bad DIMENSION"))?);
            }
        }
    }
    Err(parse_err(0, "TOUR_SECTION missing"))
}

/// Reads a `.tsp` file and attaches a best-known value from a sidecar when one
/// exists: `<stem>.best` (a single number) or else `<stem>.opt.tour`.
pub fn read_tsplib_file(path: &Path) -> Result<TspInstance, ProblemError> {
    let io = |e: std::io::Error, p: &Path| ProblemError::Io(format!("{}: {e}", p.display()));
    let text = std::fs::read_to_string(path).map_err(|e| io(e, path))?;
    let mut inst = parse_tsplib(&text)?;
    let best = path.with_extension("best");
    let tour = path.with_extension("opt.tour");
    if best.exists() {
        let s = std::fs::read_to_string(&best).map_err(|e| io(e, &best))?;
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| parse_err(1, format!("{}: not a number", best.display())))?;
        inst.reference_optimum = Some(v);
    } else if tour.exists() {
        let s = std::fs::read_to_string(&tour).map_err(|e| io(e, &tour))?;
        let t = parse_tour(&s)?;
        let v = super::evaluate(&super::Instance::Tsp(inst.clone()), &super::Payload::Tour(t))?
            .objective()
            .expect("tours are always feasible");
        inst.reference_optimum = Some(v);
    }
    inst.validate()?;
    Ok(inst)
}
