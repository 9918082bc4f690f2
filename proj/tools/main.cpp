#include "ecgmix/ecgmix.hpp"
int main(int, char**) { return 0; }
