use std::path::{Path, PathBuf};

use crate::accel::{EngineConfig, MemoryConfig, MemoryKind};
use crate::ops::{ConvSpec, Variant};
use crate::tensor::Shape;

use super::ConfigError;

/// Where a cell's offset field comes from. Random kinds draw uniform
/// integers in `[lo, hi]`, since the accelerator runs on rounded offsets.
#[derive(Debug, Clone, PartialEq)]
pub enum OffsetSource {
    Zeros,
    Uniform { seed: u64, lo: i64, hi: i64 },
    SquareUniform { seed: u64, lo: i64, hi: i64 },
    File(PathBuf),
}

/// One fully resolved grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub label: String,
    pub spec: ConvSpec,
    pub offsets: OffsetSource,
    pub engine: EngineConfig,
    pub memory: MemoryConfig,
    /// Config line that defined the cell (0 for the implicit single cell).
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub cells: Vec<Cell>,
    pub repeats: usize,
}

#[derive(Debug, Clone)]
struct Setting {
    key: String,
    value: String,
    line: usize,
}

/// Shorthand keys accepted inside `run.cell = ...`.
fn expand_cell_key(k: &str) -> String {
    match k {
        "label" => "run.label",
        "mode" => "conv.mode",
        "variant" => "conv.variant",
        "memory" => "memory.kind",
        "offsets" => "offsets.kind",
        "seed" => "offsets.seed",
        "ports" => "memory.buffer_ports",
        "n_bound" => "memory.buffer_bound",
        other => return other.to_string(),
    }
    .to_string()
}

const KEYS: &[&str] = &[
    "conv.n",
    "conv.h",
    "conv.w",
    "conv.ic",
    "conv.oc",
    "conv.k",
    "conv.stride",
    "conv.padding",
    "conv.mode",
    "conv.variant",
    "offsets.kind",
    "offsets.seed",
    "offsets.lo",
    "offsets.hi",
    "offsets.path",
    "engine.ic_parallel",
    "engine.oc_parallel",
    "engine.tap_parallel",
    "engine.clock_mhz",
    "engine.elem_bytes",
    "engine.tile_rows",
    "engine.pipeline_fill_cycles",
    "memory.kind",
    "memory.first_access_cycles",
    "memory.per_beat_cycles",
    "memory.max_burst_beats",
    "memory.bus_bytes",
    "memory.llc_capacity_bytes",
    "memory.llc_ways",
    "memory.llc_line_bytes",
    "memory.llc_hit_cycles",
    "memory.llc_seed",
    "memory.buffer_bound",
    "memory.buffer_ports",
    "memory.buffer_hit_cycles",
    "run.label",
    "run.repeats",
    "run.cell",
];

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses config text; relative offset file paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut globals = Vec::new();
        let mut cells: Vec<(usize, Vec<Setting>)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| ConfigError::parse(line, format!("expected 'section.key = value', got '{body}'")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ConfigError::parse(line, format!("unknown key '{key}'")));
            }
            if key == "run.cell" {
                let mut items = Vec::new();
                for tok in value.split_whitespace() {
                    let (k, v) = tok
                        .split_once('=')
                        .ok_or_else(|| ConfigError::parse(line, format!("cell item '{tok}' is not key=value")))?;
                    let k = expand_cell_key(k);
                    if !KEYS.contains(&k.as_str()) || k == "run.cell" || k == "run.repeats" {
                        return Err(ConfigError::parse(line, format!("unknown cell key '{k}'")));
                    }
                    items.push(Setting {
                        key: k,
                        value: v.to_string(),
                        line,
                    });
                }
                cells.push((line, items));
            } else {
                globals.push(Setting {
                    key: key.to_string(),
                    value: value.to_string(),
                    line,
                });
            }
        }

        let repeats = match last(&globals, "run.repeats") {
            Some(s) => {
                let r: usize = num(s)?;
                if r == 0 {
                    return Err(ConfigError::parse(s.line, "run.repeats must be at least 1"));
                }
                r
            }
            None => 1,
        };
        if cells.is_empty() {
            cells.push((0, Vec::new()));
        }
        let cells = cells
            .into_iter()
            .enumerate()
            .map(|(i, (line, items))| {
                let mut all = globals.clone();
                all.extend(items);
                resolve(&all, line, i, base)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { cells, repeats })
    }

    /// Replaces every random offset seed and the LLC replacement seed.
    pub fn override_seed(&mut self, seed: u64) {
        for c in &mut self.cells {
            match &mut c.offsets {
                OffsetSource::Uniform { seed: s, .. } | OffsetSource::SquareUniform { seed: s, .. } => *s = seed,
                _ => {}
            }
            c.memory.llc.replacement_seed = seed;
        }
    }
}

fn last<'a>(s: &'a [Setting], key: &str) -> Option<&'a Setting> {
    s.iter().rev().find(|x| x.key == key)
}

fn num<T: std::str::FromStr>(s: &Setting) -> Result<T, ConfigError> {
    s.value
        .parse()
        .map_err(|_| ConfigError::parse(s.line, format!("bad value '{}' for {}", s.value, s.key)))
}

fn get<T: std::str::FromStr>(s: &[Setting], key: &str, default: T) -> Result<T, ConfigError> {
    last(s, key).map_or(Ok(default), num)
}

fn resolve(s: &[Setting], line: usize, index: usize, base: &Path) -> Result<Cell, ConfigError> {
    let at = |key: &str| last(s, key).map_or(line, |x| x.line);

    let depthwise = match last(s, "conv.mode").map(|x| x.value.as_str()) {
        None | Some("full") => false,
        Some("depthwise") => true,
        Some(other) => {
            return Err(ConfigError::parse(
                at("conv.mode"),
                format!("mode must be full or depthwise, got '{other}'"),
            ))
        }
    };
    let variant: Variant = match last(s, "conv.variant") {
        Some(x) => x.value.parse().map_err(|e| ConfigError::parse(x.line, e))?,
        None => Variant::Standard,
    };
    let n = get(s, "conv.n", 1usize)?;
    let h = get(s, "conv.h", 64usize)?;
    let w = get(s, "conv.w", 64usize)?;
    let ic = get(s, "conv.ic", 256usize)?;
    let k = get(s, "conv.k", 3usize)?;
    let shape = Shape::new(n, ic, h, w).map_err(|e| ConfigError::parse(at("conv.h"), e.to_string()))?;
    let mut spec = if depthwise {
        ConvSpec::depthwise(shape, k)
    } else {
        ConvSpec::new(shape, get(s, "conv.oc", 256usize)?, k)
    };
    if depthwise {
        if let Some(x) = last(s, "conv.oc") {
            if num::<usize>(x)? != ic {
                return Err(ConfigError::Incompatible(format!(
                    "line {}: depthwise convolution needs oc == ic",
                    x.line
                )));
            }
        }
    }
    spec = spec
        .with_variant(variant)
        .with_stride(get(s, "conv.stride", 1usize)?)
        .with_padding(get(s, "conv.padding", k / 2)?);
    spec.validate().map_err(|e| ConfigError::Incompatible(e.to_string()))?;

    let offsets = offsets(s, base, at("offsets.kind"))?;
    check_offsets(&variant, &offsets, at("offsets.kind"))?;

    let mut engine = EngineConfig::for_spec(&spec);
    engine.ic_parallel = get(s, "engine.ic_parallel", engine.ic_parallel)?;
    engine.oc_parallel = get(s, "engine.oc_parallel", engine.oc_parallel)?;
    engine.tap_parallel = get(s, "engine.tap_parallel", engine.tap_parallel)?;
    engine.clock_mhz = get(s, "engine.clock_mhz", engine.clock_mhz)?;
    engine.elem_bytes = get(s, "engine.elem_bytes", engine.elem_bytes)?;
    engine.tile_rows = get(s, "engine.tile_rows", engine.tile_rows)?;
    engine.pipeline_fill_cycles = get(s, "engine.pipeline_fill_cycles", engine.pipeline_fill_cycles)?;
    engine
        .validate()
        .map_err(|e| ConfigError::Incompatible(e.to_string()))?;

    let kind: MemoryKind = match last(s, "memory.kind") {
        Some(x) => x.value.parse().map_err(|e| ConfigError::parse(x.line, e))?,
        None => MemoryKind::DirectDram,
    };
    let mut m = MemoryConfig::new(kind);
    m.dram.first_access_cycles = get(s, "memory.first_access_cycles", m.dram.first_access_cycles)?;
    m.dram.per_beat_cycles = get(s, "memory.per_beat_cycles", m.dram.per_beat_cycles)?;
    m.dram.max_burst_beats = get(s, "memory.max_burst_beats", m.dram.max_burst_beats)?;
    m.dram.bus_bytes = get(s, "memory.bus_bytes", m.dram.bus_bytes)?;
    m.llc.capacity_bytes = get(s, "memory.llc_capacity_bytes", m.llc.capacity_bytes)?;
    m.llc.ways = get(s, "memory.llc_ways", m.llc.ways)?;
    m.llc.line_bytes = get(s, "memory.llc_line_bytes", m.llc.line_bytes)?;
    m.llc.hit_cycles = get(s, "memory.llc_hit_cycles", m.llc.hit_cycles)?;
    m.llc.replacement_seed = get(s, "memory.llc_seed", m.llc.replacement_seed)?;
    m.linebuffer.bound = get(s, "memory.buffer_bound", variant.bound().unwrap_or(m.linebuffer.bound))?;
    m.linebuffer.ports = get(s, "memory.buffer_ports", m.linebuffer.ports)?;
    m.linebuffer.hit_cycles = get(s, "memory.buffer_hit_cycles", m.linebuffer.hit_cycles)?;
    m.validate().map_err(|e| ConfigError::Incompatible(e.to_string()))?;
    crate::accel::check_compatible(&spec, &m).map_err(|e| ConfigError::Incompatible(e.to_string()))?;
    if let (true, Some(b)) = (kind.is_buffered(), variant.bound()) {
        if b > m.linebuffer.bound {
            return Err(ConfigError::Incompatible(format!(
                "{kind} holds 2*{}+1 lines but variant {variant} needs 2*{b}+1",
                m.linebuffer.bound
            )));
        }
    }

    let label = match last(s, "run.label") {
        Some(x) if line == 0 || x.line == line => x.value.clone(),
        _ if line == 0 => "run".to_string(),
        _ => format!("cell{}", index + 1),
    };
    Ok(Cell {
        label,
        spec,
        offsets,
        engine,
        memory: m,
        line,
    })
}

fn offsets(s: &[Setting], base: &Path, line: usize) -> Result<OffsetSource, ConfigError> {
    let Some(kind) = last(s, "offsets.kind") else {
        return Ok(OffsetSource::Zeros);
    };
    let mut parts = kind.value.splitn(3, ':');
    let name = parts.next().unwrap_or("");
    let range = |parts: &mut std::str::SplitN<'_, char>| -> Result<(i64, i64), ConfigError> {
        let lo = match parts.next() {
            Some(v) => v
                .parse()
                .map_err(|_| ConfigError::parse(line, format!("bad lower bound '{v}'")))?,
            None => get(s, "offsets.lo", -7i64)?,
        };
        let hi = match parts.next() {
            Some(v) => v
                .parse()
                .map_err(|_| ConfigError::parse(line, format!("bad upper bound '{v}'")))?,
            None => get(s, "offsets.hi", 7i64)?,
        };
        if lo > hi {
            return Err(ConfigError::parse(line, format!("offset range [{lo}, {hi}] is empty")));
        }
        Ok((lo, hi))
    };
    let seed = get(s, "offsets.seed", 1u64)?;
    Ok(match name {
        "zeros" => OffsetSource::Zeros,
        "uniform" => {
            let (lo, hi) = range(&mut parts)?;
            OffsetSource::Uniform { seed, lo, hi }
        }
        "square_uniform" => {
            let (lo, hi) = range(&mut parts)?;
            OffsetSource::SquareUniform { seed, lo, hi }
        }
        "file" => {
            let rest: Vec<&str> = parts.collect();
            let p = if rest.is_empty() {
                last(s, "offsets.path")
                    .map(|x| x.value.clone())
                    .ok_or_else(|| ConfigError::parse(line, "offsets file needs a path"))?
            } else {
                rest.join(":")
            };
            let p = base.join(p);
            if !p.is_file() {
                return Err(ConfigError::parse(
                    line,
                    format!("offsets file {} does not exist", p.display()),
                ));
            }
            OffsetSource::File(p)
        }
        other => {
            return Err(ConfigError::parse(
                line,
                format!("unknown offsets kind '{other}' (zeros, uniform, square_uniform, file)"),
            ))
        }
    })
}

fn check_offsets(variant: &Variant, off: &OffsetSource, line: usize) -> Result<(), ConfigError> {
    let bad = |m: String| Err(ConfigError::Incompatible(format!("line {line}: {m}")));
    match (variant, off) {
        (_, OffsetSource::Zeros) | (_, OffsetSource::File(_)) => Ok(()),
        (v, _) if !v.is_deformable() => bad(format!("variant {v} takes no offsets")),
        (Variant::DeformSquare(_), OffsetSource::Uniform { .. }) => {
            bad(format!("variant {variant} needs square_uniform offsets"))
        }
        (Variant::DeformSquare(_), OffsetSource::SquareUniform { .. }) => Ok(()),
        (v, OffsetSource::SquareUniform { .. }) => bad(format!("variant {v} needs per-tap (uniform) offsets")),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::parse(text, Path::new("."))
    }

    #[test]
    fn single_implicit_cell() {
        let c = parse("conv.h = 8\nconv.w = 8  # tiny\nconv.ic = 4\nconv.oc = 4\n").unwrap();
        assert_eq!(c.cells.len(), 1);
        assert_eq!(c.repeats, 1);
        let cell = &c.cells[0];
        assert_eq!(cell.spec.in_shape, Shape::new(1, 4, 8, 8).unwrap());
        assert_eq!(cell.memory.kind, MemoryKind::DirectDram);
        assert_eq!(cell.offsets, OffsetSource::Zeros);
    }

    #[test]
    fn cells_override_globals() {
        let text = "conv.h = 8\nconv.w = 8\nconv.ic = 16\noffsets.seed = 5\n\
            run.cell = label=a mode=depthwise variant=square:7 memory=multiport offsets=square_uniform:0:7\n\
            run.cell = label=b variant=rounded offsets=uniform:-7:7 memory=llc\n";
        let c = parse(text).unwrap();
        assert_eq!(c.cells.len(), 2);
        let a = &c.cells[0];
        assert_eq!(a.label, "a");
        assert!(a.spec.depthwise);
        assert_eq!(a.spec.variant, Variant::DeformSquare(7));
        assert_eq!(a.memory.linebuffer.ports, 3);
        assert_eq!(a.engine, EngineConfig::depthwise());
        assert_eq!(a.offsets, OffsetSource::SquareUniform { seed: 5, lo: 0, hi: 7 });
        let b = &c.cells[1];
        assert!(!b.spec.depthwise);
        assert_eq!(b.memory.kind, MemoryKind::Llc);
        assert_eq!(b.line, 6);
    }

    #[test]
    fn parse_errors_carry_line() {
        for (text, line) in [
            ("conv.h = 8\nbogus line\n", 2),
            ("conv.h = x\n", 1),
            ("\n\nconv.nope = 1\n", 3),
            ("conv.variant = wobbly\n", 1),
            ("run.cell = label=a memory=tape\n", 1),
            ("run.repeats = 0\n", 1),
        ] {
            match parse(text) {
                Err(ConfigError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn incompatible_combinations() {
        for text in [
            "conv.variant = bilinear\nmemory.kind = linebuffer\n",
            "conv.variant = rounded\nmemory.kind = multiport\n",
            "conv.variant = square:7\noffsets.kind = uniform:-7:7\n",
            "conv.variant = standard\noffsets.kind = uniform:-1:1\n",
            "conv.variant = bounded:9\nmemory.kind = linebuffer\nmemory.buffer_bound = 7\n",
        ] {
            assert!(matches!(parse(text), Err(ConfigError::Incompatible(_))), "{text}");
        }
        let msg = parse("conv.variant = bilinear\nmemory.kind = linebuffer\n")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("requires bounded variant"), "{msg}");
    }

    #[test]
    fn seed_override() {
        let mut c = parse("conv.variant = rounded\noffsets.kind = uniform:-2:2\n").unwrap();
        c.override_seed(99);
        assert_eq!(
            c.cells[0].offsets,
            OffsetSource::Uniform {
                seed: 99,
                lo: -2,
                hi: 2
            }
        );
        assert_eq!(c.cells[0].memory.llc.replacement_seed, 99);
    }

    #[test]
    fn variant_strings_roundtrip() {
        for v in [
            Variant::Standard,
            Variant::Dilated(2),
            Variant::DeformBilinear,
            Variant::DeformRounded,
            Variant::DeformBounded(7),
            Variant::DeformSquare(3),
        ] {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("bounded".parse::<Variant>().is_err());
        assert!("standard:3".parse::<Variant>().is_err());
    }
}
