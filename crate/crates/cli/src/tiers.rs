//! Named tuning-parameter sweeps. Each table lists, per method, the tiers
//! from coarsest to finest.

/// Tuning tiers for every approximation.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct TierSet {
    pub vecchia: Vec<usize>,
    pub tapering: Vec<usize>,
    pub fitc: Vec<usize>,
    /// `(inducing points, nonzeros per row)`.
    pub fsa: Vec<(usize, usize)>,
}

struct Table {
    name: &'static str,
    vecchia: &'static [usize],
    tapering: &'static [usize],
    fitc: &'static [usize],
    fsa_inducing: &'static [usize],
    fsa_nnz: &'static [usize],
}

const NEIGHBORS: &[usize] = &[5, 10, 20, 40, 80];

const TABLES: &[Table] = &[
    // Simulated, effective range 0.2, N = 10,000.
    Table {
        name: "table1",
        vecchia: NEIGHBORS,
        tapering: &[11, 30, 60, 130, 263],
        fitc: &[47, 254, 500, 950, 1500],
        fsa_inducing: &[10, 24, 120, 300, 450],
        fsa_nnz: &[5, 8, 28, 100, 150],
    },
    // Simulated, effective range 0.2, N = 100,000.
    Table {
        name: "table2",
        vecchia: NEIGHBORS,
        tapering: &[8, 17, 22, 40, 111],
        fitc: &[20, 200, 275, 900, 2000],
        fsa_inducing: &[26, 91, 122, 250, 650],
        fsa_nnz: &[6, 11, 15, 27, 76],
    },
    // House prices.
    Table {
        name: "table3",
        vecchia: NEIGHBORS,
        tapering: &[32, 100, 200, 512, 739],
        fitc: &[220, 500, 1000, 2200, 3700],
        fsa_inducing: &[106, 252, 444, 1050, 1900],
        fsa_nnz: &[17, 36, 71, 256, 420],
    },
    // Canopy height LiDAR.
    Table {
        name: "table4",
        vecchia: NEIGHBORS,
        tapering: &[7, 10, 16, 23, 53],
        fitc: &[400, 760, 1100, 1400, 2200],
        fsa_inducing: &[180, 450, 775, 850, 1100],
        fsa_nnz: &[1, 7, 10, 16, 29],
    },
    // Satellite temperatures, first scene.
    Table {
        name: "table5",
        vecchia: NEIGHBORS,
        tapering: &[8, 16, 34, 64, 114],
        fitc: &[380, 800, 1400, 2000, 3000],
        fsa_inducing: &[250, 400, 580, 800, 1100],
        fsa_nnz: &[2, 10, 17, 25, 48],
    },
    // Satellite temperatures, second scene.
    Table {
        name: "table6",
        vecchia: NEIGHBORS,
        tapering: &[4, 8, 10, 14, 31],
        fitc: &[338, 425, 690, 1200, 2200],
        fsa_inducing: &[5, 180, 345, 625, 1100],
        fsa_nnz: &[1, 1, 2, 8, 16],
    },
    // Anisotropic simulation, N = 100,000.
    Table {
        name: "table7",
        vecchia: NEIGHBORS,
        tapering: &[8, 17, 22, 40, 111],
        fitc: &[20, 200, 275, 900, 2000],
        fsa_inducing: &[26, 91, 122, 250, 650],
        fsa_nnz: &[6, 11, 15, 27, 76],
    },
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    TABLES.iter().map(|t| t.name)
}

pub fn tier_preset(name: &str) -> Option<TierSet> {
    let t = TABLES.iter().find(|t| t.name == name)?;
    Some(TierSet {
        vecchia: t.vecchia.to_vec(),
        tapering: t.tapering.to_vec(),
        fitc: t.fitc.to_vec(),
        fsa: t.fsa_inducing.iter().copied().zip(t.fsa_nnz.iter().copied()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_table_has_five_tiers() {
        for name in preset_names() {
            let t = tier_preset(name).unwrap();
            assert_eq!([t.vecchia.len(), t.tapering.len(), t.fitc.len(), t.fsa.len()], [5; 4], "{name}");
        }
        assert_eq!(tier_preset("table1").unwrap().fsa[2], (120, 28));
        assert!(tier_preset("table8").is_none());
    }
}
