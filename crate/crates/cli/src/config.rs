use std::path::PathBuf;

use serde::Serialize;
use tribaker::classical::Family;

use crate::args::{ClassicalArgs, CommonArgs, FamilyArg, Format, HusimiArgs};
use crate::{CliError, Result};

pub const MAX_L: usize = 7;

/// Grid used for Husimi work when none is given: the full lattice up to
/// `D = 243`, capped there beyond.
pub const GRID_CAP: usize = 243;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Spectrum,
    Histogram,
    Husimi,
    NrScan,
    Classical,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub l: usize,
    pub families: Vec<Family>,
    pub ks: Vec<usize>,
    pub grid: usize,
    pub bins: usize,
    pub m_values: Vec<usize>,
    pub out: PathBuf,
    pub formats: Vec<Format>,
    pub seed: u64,
    pub cache: bool,
    pub states: Vec<usize>,
    pub cumulative: Vec<usize>,
    pub steps: usize,
    pub samples: u64,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// `a..b`, `a..=b` or `a-b`, inclusive.
pub fn parse_k_range(text: &str) -> Result<Vec<usize>> {
    let bad = || usage(format!("k-range `{text}` is not of the form a..b"));
    let (lo, hi) = text
        .split_once("..=")
        .or_else(|| text.split_once(".."))
        .or_else(|| text.split_once('-'))
        .ok_or_else(bad)?;
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if lo > hi {
        return Err(bad());
    }
    Ok((lo..=hi).collect())
}

impl RunConfig {
    fn from_common(command: CommandKind, args: &CommonArgs) -> Result<Self> {
        let l = args.l.unwrap_or(match command {
            CommandKind::Histogram => 7,
            CommandKind::NrScan => 6,
            _ => 5,
        });
        if l == 0 || l > MAX_L {
            return Err(usage(format!("l={l} outside 1..={MAX_L}")));
        }
        let dim = 3usize.pow(l as u32);
        let family = args.family.unwrap_or(match command {
            CommandKind::Husimi => FamilyArg::Shift,
            _ => FamilyArg::Both,
        });
        let families = match family {
            FamilyArg::Shift => vec![Family::Shift],
            FamilyArg::Intersection => vec![Family::Intersection],
            FamilyArg::Both => Family::ALL.to_vec(),
        };
        let mut ks = match (&args.k, &args.k_range) {
            (Some(ks), _) => ks.clone(),
            (None, Some(range)) => parse_k_range(range)?,
            (None, None) if command == CommandKind::Histogram => (1..=l).step_by(2).collect(),
            (None, None) => (1..=l).collect(),
        };
        ks.sort_unstable();
        ks.dedup();
        let grid = args.grid.unwrap_or(dim.min(GRID_CAP));
        let bins = args.bins.unwrap_or(100);
        let mut m_values = match &args.first {
            Some(m) => m.clone(),
            None => vec![20.min(dim), 64.min(dim)],
        };
        m_values.sort_unstable();
        m_values.dedup();
        let formats = args.format.clone().unwrap_or(match command {
            CommandKind::Husimi => vec![Format::Csv, Format::Pgm],
            _ => vec![Format::Csv],
        });
        Ok(Self {
            command,
            l,
            families,
            ks,
            grid,
            bins,
            m_values,
            out: args.out.clone(),
            formats,
            seed: args.seed,
            cache: !args.no_cache,
            states: Vec::new(),
            cumulative: Vec::new(),
            steps: 20,
            samples: 1_000_000,
        })
    }

    pub fn new(command: CommandKind, args: &CommonArgs) -> Result<Self> {
        let config = Self::from_common(command, args)?;
        config.validate()?;
        Ok(config)
    }

    pub fn husimi(args: &HusimiArgs) -> Result<Self> {
        let mut config = Self::from_common(CommandKind::Husimi, &args.common)?;
        config.states = args.states.clone().unwrap_or_else(|| vec![1, 13, 28]);
        config.cumulative = args.cumulative.clone().unwrap_or_else(|| vec![32]);
        let dim = config.dim();
        if args.states.is_none() {
            config.states.retain(|&j| j <= dim);
        }
        if args.cumulative.is_none() {
            config.cumulative.retain(|&j| j <= dim);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn classical(args: &ClassicalArgs) -> Result<Self> {
        let mut config = Self::from_common(CommandKind::Classical, &args.common)?;
        config.steps = args.steps;
        config.samples = args.samples;
        config.validate()?;
        Ok(config)
    }

    pub fn dim(&self) -> usize {
        3usize.pow(self.l as u32)
    }

    pub fn wants(&self, format: Format) -> bool {
        self.formats.contains(&format)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 || self.l > MAX_L {
            return Err(usage(format!("l={} outside 1..={MAX_L}", self.l)));
        }
        if self.ks.is_empty() {
            return Err(usage("no members selected"));
        }
        if let Some(&k) = self.ks.iter().find(|&&k| k == 0 || k > self.l) {
            return Err(usage(format!("k={k} outside 1..={}", self.l)));
        }
        if self.bins == 0 {
            return Err(usage("bins must be at least 1"));
        }
        if self.grid < 3 {
            return Err(usage(format!("grid {} below the minimum of 3", self.grid)));
        }
        let dim = self.dim();
        let in_range = |j: &usize| *j >= 1 && *j <= dim;
        if let Some(m) = self.m_values.iter().find(|m| !in_range(m)) {
            return Err(usage(format!("first={m} outside the valid range 1..={dim}")));
        }
        if let Some(j) = self.states.iter().chain(&self.cumulative).find(|j| !in_range(j)) {
            return Err(usage(format!("state j={j} outside the valid range 1..={dim}")));
        }
        if self.command == CommandKind::Husimi && self.states.is_empty() && self.cumulative.is_empty() {
            return Err(usage("no states selected"));
        }
        if self.command != CommandKind::Husimi && self.wants(Format::Pgm) {
            return Err(usage("pgm output is only produced by the husimi command"));
        }
        if self.command == CommandKind::Classical && (self.steps < 3 || self.samples == 0) {
            return Err(usage("classical runs need steps >= 3 and samples >= 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::args::{Cli, Command};
    use clap::Parser;

    fn config(argv: &[&str]) -> Result<RunConfig> {
        let cli = Cli::try_parse_from(argv).map_err(|e| usage(e.to_string()))?;
        match cli.command {
            Command::Spectrum(a) => RunConfig::new(CommandKind::Spectrum, &a),
            Command::Histogram(a) => RunConfig::new(CommandKind::Histogram, &a),
            Command::NrScan(a) => RunConfig::new(CommandKind::NrScan, &a),
            Command::Husimi(a) => RunConfig::husimi(&a),
            Command::Classical(a) => RunConfig::classical(&a),
            Command::Acceptance(_) => unreachable!(),
        }
    }

    #[test]
    fn defaults_follow_the_figures() {
        let c = config(&["tribaker", "histogram"]).unwrap();
        assert_eq!((c.l, c.bins, c.ks.clone()), (7, 100, vec![1, 3, 5, 7]));
        assert_eq!(c.families.len(), 2);
        let c = config(&["tribaker", "nr-scan"]).unwrap();
        assert_eq!((c.l, c.grid, c.m_values.clone()), (6, 243, vec![20, 64]));
        let c = config(&["tribaker", "spectrum"]).unwrap();
        assert_eq!((c.l, c.ks.len()), (5, 5));
        let c = config(&["tribaker", "husimi", "--l", "3"]).unwrap();
        assert_eq!((c.grid, c.states.clone(), c.cumulative.clone()), (27, vec![1, 13], Vec::new()));
    }

    #[test]
    fn k_ranges() {
        assert_eq!(parse_k_range("2..4").unwrap(), vec![2, 3, 4]);
        assert_eq!(parse_k_range("2..=4").unwrap(), vec![2, 3, 4]);
        assert_eq!(parse_k_range("1-2").unwrap(), vec![1, 2]);
        assert!(parse_k_range("4..2").is_err());
        assert!(parse_k_range("x").is_err());
        let c = config(&["tribaker", "spectrum", "--k-range", "2..3"]).unwrap();
        assert_eq!(c.ks, vec![2, 3]);
    }

    #[test]
    fn invalid_configs_are_usage_errors() {
        for argv in [
            &["tribaker", "spectrum", "--l", "8"][..],
            &["tribaker", "spectrum", "--l", "0"],
            &["tribaker", "spectrum", "--l", "3", "--k", "4"],
            &["tribaker", "histogram", "--bins", "0"],
            &["tribaker", "nr-scan", "--l", "2", "--grid", "2"],
            &["tribaker", "nr-scan", "--l", "2", "--first", "10"],
            &["tribaker", "husimi", "--l", "2", "--states", "10"],
            &["tribaker", "spectrum", "--format", "pgm"],
        ] {
            let err = config(argv).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{argv:?}: {err}");
        }
    }
}
