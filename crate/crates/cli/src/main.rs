fn main() {
    println!("milgen");
}
