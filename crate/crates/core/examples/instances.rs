//! Generate seeded instances, save them as Matrix Market files and load them back.
//!
//! `cargo run --example instances`

use aspm::io::{format_matrix_market, gen_gaussian, gen_pd_gaussian, load_instance_dir, parse_matrix_market, save_instance};

fn main() -> aspm::Result<()> {
    let gauss = gen_gaussian(40, 6, 3)?;
    let pd = gen_pd_gaussian(5, 3)?;
    println!("gaussian: {}x{}, interior point feasible: {}", gauss.problem.m(), gauss.problem.n(), gauss.problem.is_feasible(&gauss.x_int, 0.0));
    println!("pd: {}x{}", pd.problem.m(), pd.problem.n());

    let dir = tempfile::tempdir().expect("temp dir");
    save_instance(&gauss, dir.path())?;
    for entry in std::fs::read_dir(dir.path()).expect("listing") {
        println!("wrote {}", entry.expect("entry").file_name().to_string_lossy());
    }
    let loaded = load_instance_dir(dir.path())?;
    println!("reloaded b matches: {}", loaded.problem.b() == gauss.problem.b());
    println!("interior point regenerated from meta.json: {}", loaded.x_int.as_ref() == Some(&gauss.x_int));

    let text = "%%MatrixMarket matrix coordinate real general\n% a 3x2 sparse matrix\n3 2 3\n1 1 1.5\n2 2 -2\n3 1 4\n";
    let a = parse_matrix_market(text)?;
    println!("parsed {}x{} sparse matrix, written back as:\n{}", a.nrows(), a.ncols(), format_matrix_market(&a));
    Ok(())
}
