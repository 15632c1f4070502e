//! Writing and reading instance files.
use deconfound::io::{read_instance, write_json, InstanceFile};
use deconfound::model::{ate_exact, random_instance};

fn main() -> deconfound::Result<()> {
    let p = random_instance(3, 11)?;
    let dir = std::env::temp_dir().join("deconfound-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("instance.json");

    let mut file = std::fs::File::create(&path)?;
    write_json(&mut file, &InstanceFile::from_joint(&p))?;

    let back = read_instance(&path)?;
    println!("{}: ATE {:.6} -> {:.6}", path.display(), ate_exact(&p).value, ate_exact(&back).value);
    Ok(())
}
