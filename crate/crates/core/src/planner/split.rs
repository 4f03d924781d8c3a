//! Split plans for PGOR and the analysis deciding whether a pipeline may be
//! range-partitioned at all.

use crate::engine::step_is_splittable;
use crate::engine::varnorm::REORDER_WINDOW;
use crate::error::{Error, Result};
use crate::model::{ContigOrder, Locus};
use crate::parser::Step;

/// One task's range, inclusive. A stop at position 0 of a contig ends just
/// before that contig.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitTask {
    pub start: Locus,
    pub stop: Locus,
}

impl SplitTask {
    pub fn label(&self, build: &ContigOrder) -> String {
        let (sc, sp) = (self.start.contig.min(build.len() as u32 - 1), self.start.pos.max(1));
        let sp = if self.start.contig as usize >= build.len() { build.length(sc) } else { sp };
        let (ec, ep) = if self.stop.pos == 0 && self.stop.contig > 0 {
            let c = (self.stop.contig - 1).min(build.len() as u32 - 1);
            (c, build.length(c))
        } else {
            let c = self.stop.contig.min(build.len() as u32 - 1);
            (c, self.stop.pos.min(build.length(c)))
        };
        if sc == ec {
            format!("{}:{sp}-{ep}", build.name(sc))
        } else {
            format!("{}:{sp}-{}:{ep}", build.name(sc), build.name(ec))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    PerContig,
    Count(usize),
    Relation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub kind: SplitKind,
    pub tasks: Vec<SplitTask>,
}

impl SplitPlan {
    /// Clips every task to `[start, stop]`, dropping tasks left empty.
    pub fn restrict(mut self, start: Locus, stop: Locus) -> SplitPlan {
        self.tasks = self
            .tasks
            .into_iter()
            .filter_map(|t| {
                let s = t.start.max(start);
                let e = t.stop.min(stop);
                (s <= e).then_some(SplitTask { start: s, stop: e })
            })
            .collect();
        self
    }
}

/// Pieces per contig: at least one each, then the remainder handed out
/// greedily to the contig with the largest length per piece.
fn allocate(lengths: &[u64], n: usize) -> Vec<usize> {
    let total: u64 = lengths.iter().sum();
    let mut k: Vec<usize> =
        lengths.iter().map(|&l| ((n as u128 * l as u128 / total.max(1) as u128) as usize).max(1)).collect();
    while k.iter().sum::<usize>() < n {
        let mut best = 0;
        for i in 1..k.len() {
            if lengths[i] as u128 * k[best] as u128 > lengths[best] as u128 * k[i] as u128 {
                best = i;
            }
        }
        k[best] += 1;
    }
    k
}

/// One range per contig, or about `n` ranges sized in proportion to contig
/// length. Ranges never cross a contig boundary.
pub fn default_split(build: &ContigOrder, n: Option<usize>) -> SplitPlan {
    default_split_aligned(build, n, 1)
}

/// As [`default_split`], with every range start at `1 + k * granule`.
pub fn default_split_aligned(build: &ContigOrder, n: Option<usize>, granule: u64) -> SplitPlan {
    let granule = granule.max(1);
    let lengths: Vec<u64> = (0..build.len() as u32).map(|c| build.length(c)).collect();
    let pieces = match n {
        Some(n) => allocate(&lengths, n),
        None => vec![1; lengths.len()],
    };
    let mut tasks = Vec::new();
    for (c, (&len, &k)) in lengths.iter().zip(&pieces).enumerate() {
        let c = c as u32;
        let size = len.div_ceil(k as u64).div_ceil(granule) * granule;
        let mut start = 1;
        while start <= len {
            let stop = start.saturating_add(size - 1);
            let last = stop >= len;
            tasks.push(SplitTask { start: Locus::new(c, start), stop: Locus::new(c, if last { u64::MAX } else { stop }) });
            if last {
                break;
            }
            start = stop + 1;
        }
    }
    let kind = match n {
        Some(n) => SplitKind::Count(n),
        None => SplitKind::PerContig,
    };
    SplitPlan { kind, tasks }
}

/// Tiles the genome with one task per segment start: each task runs from
/// its segment's start to just before the next segment, the first from the
/// genome start and the last to the genome end.
pub fn relation_split(build: &ContigOrder, starts: &[(String, u64)], granule: u64) -> Result<SplitPlan> {
    let mut loci = Vec::with_capacity(starts.len());
    for (c, p) in starts {
        let l = Locus::new(build.index_of(c)?, *p);
        if granule > 1 && (p.max(&1) - 1) % granule != 0 {
            return Err(Error::NotSplittable(format!(
                "split boundary {} is not aligned to group bin size {granule}",
                build.display(l)
            )));
        }
        loci.push(l);
    }
    loci.sort();
    loci.dedup();
    let mut tasks = Vec::with_capacity(loci.len());
    for (i, _) in loci.iter().enumerate() {
        let start = if i == 0 { Locus::MIN } else { loci[i] };
        let stop = match loci.get(i + 1) {
            Some(n) => Locus::new(n.contig, n.pos - 1),
            None => Locus::MAX,
        };
        tasks.push(SplitTask { start, stop });
    }
    Ok(SplitPlan { kind: SplitKind::Relation, tasks })
}

/// How far beyond its range a task must read so that steps which move rows
/// see every input that can land inside the range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Reach {
    Exact,
    Forward(u64),
    WholeContig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAnalysis {
    /// Range starts must be aligned to this many bases (binned GROUP).
    pub granule: u64,
    pub reach: Reach,
    /// Index of the last step whose output rows may lie outside the range
    /// their inputs came from; task output is clamped after it.
    pub clamp_after: Option<usize>,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Rejects pipelines that cannot be range-partitioned and works out the
/// alignment and read-ahead partitioned execution needs.
pub fn analyze_pipeline(steps: &[Step]) -> Result<SplitAnalysis> {
    let mut a = SplitAnalysis { granule: 1, reach: Reach::Exact, clamp_after: None };
    for (i, s) in steps.iter().enumerate() {
        step_is_splittable(s).map_err(Error::NotSplittable)?;
        match s.command.as_str() {
            "group" => {
                if let Some(b) = s.args.first().and_then(|x| x.word()).and_then(|w| w.parse::<u64>().ok()) {
                    a.granule = a.granule / gcd(a.granule, b) * b;
                }
            }
            "join" if s.has("ir") => {
                a.reach = Reach::WholeContig;
                a.clamp_after = Some(i);
            }
            "varnorm" => {
                a.reach = match a.reach {
                    Reach::Exact => Reach::Forward(REORDER_WINDOW),
                    Reach::Forward(w) => Reach::Forward(w + REORDER_WINDOW),
                    Reach::WholeContig => Reach::WholeContig,
                };
                a.clamp_after = Some(i);
            }
            _ => {}
        }
    }
    Ok(a)
}

impl SplitAnalysis {
    /// The range a task must read to produce its own range's output.
    pub fn read_range(&self, t: &SplitTask) -> (Locus, Locus) {
        match self.reach {
            Reach::Exact => (t.start, t.stop),
            Reach::Forward(w) => (t.start, Locus::new(t.stop.contig, t.stop.pos.saturating_add(w))),
            Reach::WholeContig => (Locus::new(t.start.contig, 0), Locus::new(t.stop.contig, u64::MAX)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_tail;

    fn human() -> ContigOrder {
        let lens = [
            248956422u64, 242193529, 198295559, 190214555, 181538259, 170805979, 159345973, 145138636, 138394717,
            133797422, 135086622, 133275309, 114364328, 107043718, 101991189, 90338345, 83257441, 80373285,
            58617616, 64444167, 46709983, 50818468, 156040895, 57227415, 16569,
        ];
        let names = (1..=22).map(|i| format!("chr{i}")).chain(["chrX", "chrY", "chrM"].map(String::from));
        ContigOrder::new(names.zip(lens)).unwrap()
    }

    #[test]
    fn per_contig_and_one() {
        let b = human();
        assert_eq!(default_split(&b, None).tasks.len(), 25);
        let one = default_split(&b, Some(1));
        assert_eq!(one.tasks.len(), 25);
        assert!(one.tasks.iter().all(|t| t.start.contig == t.stop.contig));
    }

    #[test]
    fn fifty_proportional() {
        let b = human();
        let plan = default_split(&b, Some(50));
        assert_eq!(plan.tasks.len(), 50);
        // oracle: every contig gets one piece, then repeatedly the contig
        // whose pieces are currently longest gets another
        let lens: Vec<u64> = (0..25).map(|c| b.length(c)).collect();
        let total: u64 = lens.iter().sum();
        let mut want: Vec<usize> = lens.iter().map(|&l| ((50 * l / total) as usize).max(1)).collect();
        while want.iter().sum::<usize>() < 50 {
            let i = (0..25)
                .max_by(|&x, &y| (lens[x] as f64 / want[x] as f64).partial_cmp(&(lens[y] as f64 / want[y] as f64)).unwrap().then(y.cmp(&x)))
                .unwrap();
            want[i] += 1;
        }
        for c in 0..25u32 {
            let got = plan.tasks.iter().filter(|t| t.start.contig == c).count();
            assert_eq!(got, want[c as usize], "contig {c}");
        }
        assert!(plan.tasks.iter().all(|t| t.start.contig == t.stop.contig));
        // contiguous cover of each contig
        for w in plan.tasks.windows(2) {
            if w[0].start.contig == w[1].start.contig {
                assert_eq!(w[0].stop.pos + 1, w[1].start.pos);
            }
        }
    }

    #[test]
    fn aligned_starts() {
        let b = human();
        let plan = default_split_aligned(&b, Some(7), 1000);
        assert!(plan.tasks.iter().all(|t| (t.start.pos - 1) % 1000 == 0));
    }

    #[test]
    fn relation_tiles_genome() {
        let b = ContigOrder::new([("chr1".into(), 100), ("chr2".into(), 50)]).unwrap();
        let segs = [("chr1".to_string(), 11), ("chr1".to_string(), 51), ("chr2".to_string(), 1)];
        let plan = relation_split(&b, &segs, 1).unwrap();
        assert_eq!(plan.tasks.len(), 3);
        assert_eq!(plan.tasks[0].label(&b), "chr1:1-50");
        assert_eq!(plan.tasks[1].label(&b), "chr1:51-100");
        assert_eq!(plan.tasks[2].label(&b), "chr2:1-50");
        assert!(matches!(relation_split(&b, &segs, 20), Err(Error::NotSplittable(_))));
    }

    #[test]
    fn analysis() {
        let steps = parse_tail("where pos > 3 | group 100 -count | group 1000 -count", &[]).unwrap();
        assert_eq!(analyze_pipeline(&steps).unwrap().granule, 1000);
        for bad in ["group genome -count", "sort genome", "distinct", "rownum", "seghist 10"] {
            let steps = parse_tail(bad, &[]).unwrap();
            assert!(matches!(analyze_pipeline(&steps), Err(Error::NotSplittable(_))), "{bad}");
        }
        let steps = parse_tail("join -segsnp -ir x.gorz | where pos > 1", &[]).unwrap();
        let a = analyze_pipeline(&steps).unwrap();
        assert_eq!((a.reach, a.clamp_after), (Reach::WholeContig, Some(0)));
    }
}
