#include <stdio.h>

int main(void) {
  int bound = 100;
  int acc = 0;
  int i = 1;
  while (i <= bound) {
    acc += i;
    i = i + 1;
  }
  printf("%d\n", acc);
  return 0;
}
