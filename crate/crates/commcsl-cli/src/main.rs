fn main() {
    eprintln!("usage: commcsl <check-spec|verify|run|explore|oracle|corpus|emit-smt> ...");
    std::process::exit(3);
}
