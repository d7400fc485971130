#include <stdio.h>

int main(void) {
  int total = 0;
  for (int i = 1; i <= 100; i++) {
    if (i % 2 == 0) {
      total += i;
    } else {
      total += i;
    }
  }
  printf("%d\n", total);
  return 0;
}
