use std::fmt;
use std::str::FromStr;

use crate::ops::ConvSpec;

use super::SimError;

/// MAC array shape and clock of the convolution engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    /// Input channels processed in parallel; also the width of one packed
    /// input fetch.
    pub ic_parallel: usize,
    pub oc_parallel: usize,
    /// Kernel taps processed in parallel.
    pub tap_parallel: usize,
    pub clock_mhz: f64,
    /// Bytes per feature-map, weight and offset element in DRAM.
    pub elem_bytes: u64,
    /// Output rows per tile; weights are (re)loaded at the start of every
    /// tile. Zero means one tile covering the whole output.
    pub tile_rows: usize,
    pub pipeline_fill_cycles: u64,
}

impl EngineConfig {
    /// 8x8x9 MACs for full convolution.
    pub fn full() -> Self {
        Self {
            ic_parallel: 8,
            oc_parallel: 8,
            tap_parallel: 9,
            clock_mhz: 100.0,
            elem_bytes: 4,
            tile_rows: 0,
            pipeline_fill_cycles: 1000,
        }
    }

    /// 16x9 MACs for depthwise convolution.
    pub fn depthwise() -> Self {
        Self {
            ic_parallel: 16,
            oc_parallel: 1,
            ..Self::full()
        }
    }

    pub fn for_spec(spec: &ConvSpec) -> Self {
        if spec.depthwise {
            Self::depthwise()
        } else {
            Self::full()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.ic_parallel == 0 || self.oc_parallel == 0 || self.tap_parallel == 0 {
            return Err(SimError::InvalidConfig("parallel factors must be at least 1".into()));
        }
        if !(self.clock_mhz > 0.0 && self.clock_mhz.is_finite()) {
            return Err(SimError::InvalidConfig(format!("clock {} MHz", self.clock_mhz)));
        }
        if self.elem_bytes == 0 {
            return Err(SimError::InvalidConfig("element size must be at least 1 byte".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MemoryKind {
    DirectDram,
    Llc,
    LineBuffer,
    LineBufferMultiPort,
}

impl MemoryKind {
    pub fn is_buffered(&self) -> bool {
        matches!(self, MemoryKind::LineBuffer | MemoryKind::LineBufferMultiPort)
    }

    pub fn label(&self) -> &'static str {
        match self {
            MemoryKind::DirectDram => "direct",
            MemoryKind::Llc => "llc",
            MemoryKind::LineBuffer => "linebuffer",
            MemoryKind::LineBufferMultiPort => "multiport",
        }
    }
}

impl fmt::Display for MemoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for MemoryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "direct" => MemoryKind::DirectDram,
            "llc" => MemoryKind::Llc,
            "linebuffer" => MemoryKind::LineBuffer,
            "multiport" => MemoryKind::LineBufferMultiPort,
            _ => {
                return Err(format!(
                    "unknown memory kind '{s}' (direct, llc, linebuffer, multiport)"
                ))
            }
        })
    }
}

/// External memory timing. A transaction costs
/// `first_access_cycles + beats * per_beat_cycles`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DramConfig {
    pub first_access_cycles: u64,
    pub per_beat_cycles: u64,
    pub max_burst_beats: u64,
    pub bus_bytes: u64,
}

impl Default for DramConfig {
    fn default() -> Self {
        Self {
            first_access_cycles: 10,
            per_beat_cycles: 1,
            max_burst_beats: 64,
            bus_bytes: 16,
        }
    }
}

impl DramConfig {
    pub fn beats(&self, bytes: u64) -> u64 {
        bytes.div_ceil(self.bus_bytes)
    }

    pub fn transaction_cycles(&self, beats: u64) -> u64 {
        self.first_access_cycles + beats * self.per_beat_cycles
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LlcConfig {
    pub capacity_bytes: u64,
    pub ways: u64,
    pub line_bytes: u64,
    pub hit_cycles: u64,
    pub replacement_seed: u64,
}

impl Default for LlcConfig {
    fn default() -> Self {
        Self {
            capacity_bytes: 1 << 20,
            ways: 16,
            line_bytes: 64,
            hit_cycles: 8,
            replacement_seed: 0x5EED,
        }
    }
}

impl LlcConfig {
    pub fn sets(&self) -> u64 {
        self.capacity_bytes / (self.ways * self.line_bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineBufferConfig {
    /// Offset bound; the buffer holds `2N + 1` image rows.
    pub bound: u32,
    /// Banked read ports, 1 or 3.
    pub ports: usize,
    pub hit_cycles: u64,
}

impl LineBufferConfig {
    pub fn lines(&self) -> usize {
        2 * self.bound as usize + 1
    }
}

impl Default for LineBufferConfig {
    fn default() -> Self {
        Self {
            bound: 7,
            ports: 1,
            hit_cycles: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryConfig {
    pub kind: MemoryKind,
    pub dram: DramConfig,
    pub llc: LlcConfig,
    pub linebuffer: LineBufferConfig,
}

impl MemoryConfig {
    /// Defaults for `kind`; the multi-port buffer gets three ports.
    pub fn new(kind: MemoryKind) -> Self {
        let mut linebuffer = LineBufferConfig::default();
        if kind == MemoryKind::LineBufferMultiPort {
            linebuffer.ports = 3;
        }
        Self {
            kind,
            dram: DramConfig::default(),
            llc: LlcConfig::default(),
            linebuffer,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        let d = &self.dram;
        if d.bus_bytes == 0 || d.max_burst_beats == 0 {
            return bad("bus width and burst length must be positive".into());
        }
        let l = &self.llc;
        if l.ways == 0 || l.line_bytes == 0 || !l.capacity_bytes.is_multiple_of(l.ways * l.line_bytes) {
            return bad(format!(
                "cache capacity {} is not divisible by ways*line ({}*{})",
                l.capacity_bytes, l.ways, l.line_bytes
            ));
        }
        if l.sets() == 0 {
            return bad("cache has no sets".into());
        }
        let b = &self.linebuffer;
        if b.ports != 1 && b.ports != 3 {
            return bad(format!("line buffer ports must be 1 or 3, got {}", b.ports));
        }
        if b.bound == 0 {
            return bad("line buffer bound must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for kind in [
            MemoryKind::DirectDram,
            MemoryKind::Llc,
            MemoryKind::LineBuffer,
            MemoryKind::LineBufferMultiPort,
        ] {
            MemoryConfig::new(kind).validate().unwrap();
        }
        assert_eq!(MemoryConfig::new(MemoryKind::LineBufferMultiPort).linebuffer.ports, 3);
        assert_eq!(LlcConfig::default().sets(), 1024);
        assert_eq!(LineBufferConfig::default().lines(), 15);
    }

    #[test]
    fn rejects_bad_geometry() {
        let mut m = MemoryConfig::new(MemoryKind::Llc);
        m.llc.capacity_bytes = 1000;
        assert!(m.validate().is_err());
        let mut m = MemoryConfig::new(MemoryKind::LineBuffer);
        m.linebuffer.ports = 2;
        assert!(m.validate().is_err());
        let mut e = EngineConfig::full();
        e.oc_parallel = 0;
        assert!(e.validate().is_err());
    }
}
