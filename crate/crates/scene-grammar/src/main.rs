fn main() {
    std::process::exit(scene_grammar::cli::run());
}
