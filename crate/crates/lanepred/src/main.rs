fn main() {
    std::process::exit(lanepred::Result::Ok(()).map(|()| 0).unwrap_or(1));
}
