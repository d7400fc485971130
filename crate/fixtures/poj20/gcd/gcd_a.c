#include <stdio.h>

int main(void) {
  int a = 252;
  int b = 105;
  while (b != 0) {
    int t = b;
    b = a % b;
    a = t;
  }
  printf("%d\n", a);
  return 0;
}
