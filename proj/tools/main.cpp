#include "commands.hpp"

int main(int argc, char** argv) { return inklab::cli::run(argc, argv); }
