//! Pipe command signatures, used to validate steps at parse time.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flag {
    Switch,
    Value,
    /// Takes a relation (file, `[#name#]` or nested query).
    Relation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// The rest of the step is one expression.
    Expr,
    /// A column name then an expression (`calc x expr`, `replace c expr`).
    NamedExpr,
    /// Comma-separated column specs.
    Columns,
    /// Positional words; the listed positions are relations.
    Args { min: usize, max: usize, rels: &'static [usize] },
}

#[derive(Debug)]
pub struct CommandSpec {
    pub name: &'static str,
    pub flags: &'static [(&'static str, Flag)],
    pub shape: Shape,
}

impl CommandSpec {
    pub fn flag(&self, name: &str) -> Option<Flag> {
        self.flags.iter().find(|(n, _)| *n == name).map(|(_, k)| *k)
    }
}

use Flag::*;

const fn args(min: usize, max: usize) -> Shape {
    Shape::Args { min, max, rels: &[] }
}

const fn rel() -> Shape {
    Shape::Args { min: 1, max: 1, rels: &[0] }
}

pub static COMMANDS: &[CommandSpec] = &[
    CommandSpec { name: "where", flags: &[], shape: Shape::Expr },
    CommandSpec { name: "calc", flags: &[], shape: Shape::NamedExpr },
    CommandSpec { name: "replace", flags: &[], shape: Shape::NamedExpr },
    CommandSpec { name: "select", flags: &[], shape: Shape::Columns },
    CommandSpec { name: "rename", flags: &[], shape: args(2, 2) },
    CommandSpec { name: "rownum", flags: &[], shape: args(0, 0) },
    CommandSpec { name: "distinct", flags: &[], shape: args(0, 0) },
    CommandSpec { name: "split", flags: &[], shape: args(1, 1) },
    CommandSpec { name: "inset", flags: &[("c", Value)], shape: rel() },
    CommandSpec { name: "map", flags: &[("c", Value)], shape: rel() },
    CommandSpec { name: "multimap", flags: &[("c", Value), ("cartesian", Switch)], shape: rel() },
    CommandSpec { name: "dagmap", flags: &[("c", Value)], shape: rel() },
    CommandSpec {
        name: "group",
        flags: &[("gc", Value), ("count", Switch), ("lis", Switch), ("set", Switch), ("sc", Value)],
        shape: args(0, 1),
    },
    CommandSpec { name: "sort", flags: &[("c", Value)], shape: args(0, 1) },
    CommandSpec { name: "seghist", flags: &[], shape: args(1, 1) },
    CommandSpec {
        name: "varjoin",
        flags: &[("i", Switch), ("ir", Switch), ("l", Switch), ("r", Switch), ("e", Value)],
        shape: rel(),
    },
    CommandSpec {
        name: "join",
        flags: &[
            ("segsnp", Switch),
            ("snpseg", Switch),
            ("segseg", Switch),
            ("f", Value),
            ("i", Switch),
            ("ir", Switch),
            ("l", Switch),
            ("r", Switch),
            ("e", Value),
        ],
        shape: rel(),
    },
    CommandSpec { name: "varnorm", flags: &[("left", Switch)], shape: args(2, 2) },
    CommandSpec {
        name: "csvsel",
        flags: &[("u", Value), ("gc", Value), ("vs", Value)],
        shape: Shape::Args { min: 2, max: 2, rels: &[0, 1] },
    },
];

/// Source options accepted after `gor`/`nor`/`pgor`/`parallel`.
pub static SOURCE_FLAGS: &[(&str, Flag)] = &[
    ("p", Value),
    ("f", Value),
    ("ff", Relation),
    ("nf", Switch),
    ("split", Value),
    ("parts", Relation),
];

pub fn command(name: &str) -> Option<&'static CommandSpec> {
    COMMANDS.iter().find(|c| c.name == name)
}

/// Closest known name, if any is close enough to be a plausible typo.
pub fn suggest<'a>(word: &str, candidates: impl Iterator<Item = &'a str>) -> Option<String> {
    candidates
        .map(|c| (strsim::levenshtein(word, c), c))
        .filter(|(d, c)| *d <= (c.len().max(word.len()) / 2).max(1))
        .min_by_key(|(d, _)| *d)
        .map(|(_, c)| c.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suggestions() {
        assert_eq!(suggest("varjion", COMMANDS.iter().map(|c| c.name)).as_deref(), Some("varjoin"));
        assert_eq!(suggest("grop", COMMANDS.iter().map(|c| c.name)).as_deref(), Some("group"));
        assert_eq!(suggest("zzzzzzzz", COMMANDS.iter().map(|c| c.name)), None);
    }
}
