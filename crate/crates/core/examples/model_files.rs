//! Saving a model as binary and CSV bundles and loading it back.

use siga::io::{load_model, save_model};
use siga::linmodel::random_instance;
use siga::exact_posterior;

fn main() -> siga::Result<()> {
    let dir = std::env::temp_dir().join("siga_example_files");
    let (model, _) = random_instance(16, 6, 1.0, 0.2, 9)?;
    for ext in ["bin", "csv"] {
        let bundle = save_model(&model, &dir, &format!("model_{ext}"), ext)?;
        let back = load_model(&bundle)?;
        let same = back.a() == model.a() && back.y() == model.y() && back.d() == model.d();
        println!("{}: identical after reload: {same}", bundle.display());
    }
    let bundle = dir.join("model_csv.toml");
    println!("{}", std::fs::read_to_string(&bundle).unwrap_or_default());
    let mu = exact_posterior(&load_model(&bundle)?)?.mu;
    println!("posterior mean[0] from the reloaded CSV bundle: {:.6}", mu[0]);
    Ok(())
}
