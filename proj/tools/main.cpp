#include "app.hpp"

int main(int argc, char** argv) { return kgad::cli::run(argc, argv); }
