//! Small fixtures shared by unit tests, integration tests, and examples.

use crate::data::{BinConfig, Dataset, RawTable};

/// Three binary features; `Pos` iff `Old∧(Male∨Smokes) ∨ (¬Old∧Male∧Smokes)`.
pub const TOY8_CSV: &str = "\
Old,Male,Smokes,label
1,1,1,Pos
1,1,0,Pos
1,0,1,Pos
1,0,0,Neg
0,1,1,Pos
0,1,0,Neg
0,0,1,Neg
0,0,0,Neg
";

pub fn toy8() -> Dataset {
    let table = RawTable::from_reader(TOY8_CSV.as_bytes()).expect("fixture parses");
    Dataset::from_raw(&table, "label", &BinConfig::default()).expect("fixture loads")
}
