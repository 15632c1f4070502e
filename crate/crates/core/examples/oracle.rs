//! Revealing hidden confounder values, from a model or from a finite table.
use deconfound::estimate::DeconfoundedCounts;
use deconfound::model::{ConditionalTable, Group};
use deconfound::sim::Oracle;

fn main() -> deconfound::Result<()> {
    let g = Group { y: 1, t: 0 };

    let mut model = Oracle::synthetic(ConditionalTable::binary([0.5, 0.2, 0.7, 0.6])?, 7);
    println!("synthetic draws: {:?}", model.draw_conditional(g, 10)?);
    println!("synthetic counts of 1000: {:?}", model.draw_conditional_counts(g, 1000)?);

    let table = DeconfoundedCounts::new([vec![5, 5], vec![5, 5], vec![3, 1], vec![5, 5]])?;
    let mut empirical = Oracle::empirical(&table, 7);
    println!("empirical counts of 3: {:?}", empirical.draw_conditional_counts(g, 3)?);
    println!("left in group: {:?}", empirical.remaining(g));
    match empirical.draw_conditional(g, 5) {
        Ok(_) => unreachable!(),
        Err(e) => println!("asking for more: {e}"),
    }
    Ok(())
}
