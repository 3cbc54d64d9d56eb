#include "acre/app.hpp"

int main(int argc, char** argv) { return acre::app::run(argc, argv); }
