#include "stressmon/cli/app.hpp"

int main(int argc, char** argv) { return stressmon::cli::run(argc, argv); }
